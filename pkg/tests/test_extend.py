import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unext.conic import ConicProblem, solve
from unext.errors import ShapeMismatch
from unext.extend import (
    ExtendibilitySpec,
    bipartite_superchannel_1wlocc,
    build_bipartite_extension_constraints,
    build_p2p_extension_constraints,
    extension_residuals,
    ext_shape,
    kext_channel_feasible,
    kext_isotropic_threshold,
    kext_state_feasible,
    kext_superchannel_1wlocc,
    validate_bipartite_kext_superchannel,
    validate_kext_superchannel,
)
from unext.linalg import SubsystemShape, kron, partial_trace, permute_systems, random_density, random_unitary
from unext.quantum import (
    SuperchannelChoi,
    _gamma_into,
    as_bipartite,
    bipartite,
    choi_from_kraus,
    embed_in_erasure_space,
    erasure_flag,
    gamma,
    isotropic_state,
    make_depolarizing,
    make_erasure,
    make_identity,
    make_replacer,
    make_semicausal_erasure,
    max_entangled_state,
    p2p,
    superchannel_1wlocc,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
AB2 = SubsystemShape([2, 2], ["A", "B"])


def random_channel(d_in, d_out, rng, n_kraus=2):
    g = rng.standard_normal((d_out * n_kraus, d_in)) + 1j * rng.standard_normal((d_out * n_kraus, d_in))
    q, _ = np.linalg.qr(g)
    return choi_from_kraus([q[i * d_out:(i + 1) * d_out, :] for i in range(n_kraus)], d_in, d_out)


def random_instrument(d_in, d_out, rng, outcomes=2):
    g = rng.standard_normal((d_out * outcomes, d_in)) + 1j * rng.standard_normal((d_out * outcomes, d_in))
    q, _ = np.linalg.qr(g)
    return [p2p(choi_from_kraus([q[i * d_out:(i + 1) * d_out]], d_in, d_out).choi, d_in, d_out, cp_only=True)
            for i in range(outcomes)]


def conj_on(m, shape, label, v):
    """Conjugate the factor ``label`` of m by the unitary v."""
    i = shape.index(label)
    u = kron(np.eye(int(np.prod(shape.dims[:i]))), v, np.eye(int(np.prod(shape.dims[i + 1:]))))
    return u @ m @ u.conj().T


def separable_state(rng, d=2, terms=3):
    probs = rng.dirichlet(np.ones(terms))
    return sum(p * np.kron(random_density(d, rng), random_density(d, rng)) for p in probs)


def flagged_two_extendible_state(d):
    """(1/2) Phi^d + (1/2) pi x |e><e| with Bob's space extended by the flag."""
    phi = embed_pair(max_entangled_state(d), d)
    return 0.5 * phi + 0.5 * np.kron(np.eye(d) / d, erasure_flag(d))


def embed_pair(rho, d):
    v = np.kron(np.eye(d), np.eye(d + 1)[:, :d])
    return v @ rho @ v.conj().T


class TestExtendibilitySpec:
    def test_validation(self):
        shp = SubsystemShape([2, 2], ["A", "B"])
        ExtendibilitySpec("state", 2, shp, shp)
        with pytest.raises(ValueError):
            ExtendibilitySpec("graph", 2, shp, shp)
        with pytest.raises(ValueError):
            ExtendibilitySpec("state", 1, shp, shp)


class TestStateExtendibility:
    def test_separable(self, rng):
        assert kext_state_feasible(separable_state(rng), AB2, 2).feasible

    def test_two_extendible_entangled(self):
        d = 2
        rho = flagged_two_extendible_state(d)
        rep = kext_state_feasible(rho, SubsystemShape([d, d + 1], ["A", "B"]), 2)
        assert rep.feasible
        assert max(rep.certificate_residuals.values()) <= 1e-6

    def test_maximally_entangled(self):
        assert not kext_state_feasible(max_entangled_state(2), AB2, 2).feasible

    def test_maximally_mixed_every_k(self):
        for k in (2, 3):
            assert kext_state_feasible(isotropic_state(2, 0.25), AB2, k).feasible

    def test_isotropic_threshold_qubit(self):
        f = kext_isotropic_threshold(2, 2)
        assert abs(f - 0.75) <= 1e-3

    def test_monotone_nesting(self):
        for f in np.linspace(0.3, 0.9, 7):
            rho = isotropic_state(2, f)
            if kext_state_feasible(rho, AB2, 3).feasible:
                assert kext_state_feasible(rho, AB2, 2).feasible

    @settings(max_examples=10)
    @given(seeds)
    def test_local_unitary_invariance(self, seed):
        rng = np.random.default_rng(seed)
        f = rng.uniform(0.5, 0.95)
        rho = isotropic_state(2, f)
        u = np.kron(random_unitary(2, rng), np.eye(2))
        a = kext_state_feasible(rho, AB2, 2)
        b = kext_state_feasible(u @ rho @ u.conj().T, AB2, 2)
        assert a.feasible == b.feasible
        assert abs(a.margin - b.margin) <= 1e-5

    def test_k_must_be_two_or_more(self):
        with pytest.raises(ValueError):
            kext_state_feasible(max_entangled_state(2), AB2, 1)


class TestChannelExtendibility:
    def test_depolarizing_boundary(self):
        assert kext_channel_feasible(make_depolarizing(2, 0.4), 2)[0].feasible
        assert not kext_channel_feasible(make_depolarizing(2, 0.2), 2)[0].feasible

    def test_choi_state_of_extendible_channel(self):
        rep, ext = kext_channel_feasible(make_depolarizing(2, 0.5), 2)
        assert rep.feasible
        omega = ext / 2
        assert np.allclose(partial_trace(omega, SubsystemShape([2, 2, 2], ["A", "B1", "B2"]), ["A", "B1"]),
                           make_depolarizing(2, 0.5).choi / 2, atol=1e-6)
        assert kext_state_feasible(make_depolarizing(2, 0.5).choi / 2, AB2, 2).feasible


class TestExtensionConstraints:
    def test_identity_product_family(self):
        sigma = random_density(2, np.random.default_rng(3))
        res = extension_residuals(make_identity(2), kron(gamma(2), sigma))
        assert max(res.values()) <= 1e-12

    def test_identity_solver_witness(self):
        prob, model = build_p2p_extension_constraints(make_identity(2))
        rep, wit = solve(prob)
        assert rep.status in ("optimal", "inaccurate")
        gp = model.gamma_p.value(_params(prob, wit))
        shp = SubsystemShape([2, 2, 2], ["A", "B1", "B2"])
        assert np.allclose(partial_trace(gp, shp, ["A", "B1"]), gamma(2), atol=1e-6)
        a_b2 = partial_trace(gp, shp, ["A", "B2"])
        sigma = partial_trace(a_b2, SubsystemShape([2, 2], ["A", "B2"]), ["B2"]) / 2
        assert np.allclose(a_b2, np.kron(np.eye(2), sigma), atol=1e-6)

    def test_replacer_product(self):
        sigma = random_density(2, np.random.default_rng(4))
        n = make_replacer(2, sigma)
        assert max(extension_residuals(n, kron(np.eye(2), sigma, sigma)).values()) <= 1e-12

    def test_erasure_half_symmetric_split(self):
        p = 0.5
        g, e = _gamma_into(2), erasure_flag(2)
        swap_shape = SubsystemShape([2, 3, 3], ["A", "B2", "B1"])
        ext = p * permute_systems(kron(g, e), swap_shape, ["A", "B1", "B2"]) + (1 - p) * kron(g, e)
        res = extension_residuals(make_erasure(2, p), ext)
        assert max(res.values()) <= 1e-12
        shp = SubsystemShape([2, 3, 3], ["A", "B1", "B2"])
        assert np.allclose(partial_trace(ext, shp, ["A", "B1"]), partial_trace(ext, shp, ["A", "B2"]))

    def test_trivial_bob_input_matches_p2p(self):
        n = make_depolarizing(2, 0.3)
        p1, _ = build_p2p_extension_constraints(n)
        p2, _ = build_bipartite_extension_constraints(as_bipartite(n))
        assert [name for name, _ in p1.equalities] == [name for name, _ in p2.equalities]
        assert not any("nonsignaling" in name for name, _ in p2.equalities)

    def test_semicausal_erasure_product_candidate(self):
        d, p = 2, 0.25
        n = make_semicausal_erasure(d, p)
        ext = kron(n.choi, np.eye(d + 1) / (d + 1))
        assert max(extension_residuals(n, ext).values()) <= 1e-12

    @settings(max_examples=10)
    @given(seeds)
    def test_one_way_locc_copy_extension(self, seed):
        rng = np.random.default_rng(seed)
        inst = random_instrument(2, 2, rng)
        bob = [random_channel(2, 2, rng) for _ in inst]
        n_choi = sum(_product_choi([e, dd], [("A", "A'"), ("B", "B'")], ["A", "B", "A'", "B'"])
                     for e, dd in zip(inst, bob))
        n = bipartite(n_choi, [2, 2, 2, 2])
        ext = sum(_product_choi([e, dd, dd], [("A", "A'"), ("B1", "B1'"), ("B2", "B2'")], list(ext_shape(n).labels))
                  for e, dd in zip(inst, bob))
        assert max(extension_residuals(n, ext).values()) <= 1e-10

    def test_classical_copy_of_bob_signals(self):
        # dephasing on Bob: copying B1 into both outputs keeps the marginal but lets B1 reach B2'
        deph = sum(np.kron(np.diag(np.eye(2)[x]), np.diag(np.eye(2)[x])) for x in range(2))
        n = bipartite(_product_choi([make_identity(2), p2p(deph, 2, 2)], [("A", "A'"), ("B", "B'")],
                                    ["A", "B", "A'", "B'"]), [2, 2, 2, 2])
        copy = sum(kron(np.diag(np.eye(2)[x]), np.eye(2), np.diag(np.eye(2)[x]), np.diag(np.eye(2)[x]))
                   for x in range(2))
        ext = permute_systems(kron(gamma(2), copy),
                              SubsystemShape([2, 2, 2, 2, 2, 2], ["A", "A'", "B1", "B2", "B1'", "B2'"]),
                              list(ext_shape(n).labels))
        res = extension_residuals(n, ext)
        assert res["marginal"] <= 1e-12 and res["psd"] <= 1e-12
        assert res["nonsignaling"] > 0.1
        assert extension_residuals(n, ext, nonsignaling=False).keys() == {"psd", "marginal", "tp"}

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            extension_residuals(make_identity(2), np.eye(4))


class TestSuperchannelExtensions:
    @pytest.mark.parametrize("k", [2, 3])
    def test_one_way_locc_copy(self, rng, k):
        pre = random_instrument(2, 2, rng)
        post = [random_channel(2, 2, rng) for _ in pre]
        theta = superchannel_1wlocc(pre, post)
        ups = kext_superchannel_1wlocc(pre, post, k)
        rep = validate_kext_superchannel(theta, ups, k)
        assert rep.feasible, rep.certificate_residuals

    def test_scaled_marginal_rejects_product_copy(self, rng):
        pre = random_instrument(2, 2, rng)
        post = [random_channel(2, 2, rng) for _ in pre]
        rep = validate_kext_superchannel(superchannel_1wlocc(pre, post), kext_superchannel_1wlocc(pre, post, 2), 2,
                                         marginal_scale=0.5)
        assert not rep.feasible and rep.certificate_residuals["marginal"] > 1e-3

    def test_identity_broadcast(self):
        ident = [make_identity(2)]
        theta = superchannel_1wlocc(ident, ident)
        ups = kext_superchannel_1wlocc(ident, ident, 2)
        assert validate_kext_superchannel(theta, ups, 2).feasible

    def test_asymmetric_replica_breaks_covariance(self, rng):
        pre = random_instrument(2, 2, rng)
        post = [random_channel(2, 2, rng) for _ in pre]
        theta = superchannel_1wlocc(pre, post)
        ups = kext_superchannel_1wlocc(pre, post, 2)
        bad = SuperchannelChoi(conj_on(ups.choi, ups.shape, "B2", random_unitary(2, rng)), ups.shape, ups.roles)
        rep = validate_kext_superchannel(theta, bad, 2)
        assert not rep.feasible
        assert rep.certificate_residuals["covariance"] > 1e-3
        assert rep.certificate_residuals["marginal"] <= 1e-10

    def test_replica_count_checked(self, rng):
        ident = [make_identity(2)]
        with pytest.raises(ShapeMismatch):
            validate_kext_superchannel(superchannel_1wlocc(ident, ident), kext_superchannel_1wlocc(ident, ident, 3), 2)


class TestBipartiteSuperchannelExtensions:
    def _parts(self, rng):
        a_pre = random_instrument(2, 2, rng)
        a_post = [random_channel(2, 2, rng) for _ in a_pre]
        b_pre = [random_channel(2, 2, rng) for _ in a_pre]
        b_post = [random_channel(2, 2, rng) for _ in a_pre]
        return a_pre, a_post, b_pre, b_post

    def test_one_way_locc_copy(self, rng):
        parts = self._parts(rng)
        theta = bipartite_superchannel_1wlocc(*parts)
        ups = bipartite_superchannel_1wlocc(*parts, k=2)
        rep = validate_bipartite_kext_superchannel(theta, ups, 2)
        assert rep.feasible, rep.certificate_residuals

    def test_permutation_breaking(self, rng):
        parts = self._parts(rng)
        theta = bipartite_superchannel_1wlocc(*parts)
        ups = bipartite_superchannel_1wlocc(*parts, k=2)
        bad = SuperchannelChoi(conj_on(ups.choi, ups.shape, "B'2", random_unitary(2, rng)), ups.shape, ups.roles)
        rep = validate_bipartite_kext_superchannel(theta, bad, 2)
        assert rep.certificate_residuals["covariance"] > 1e-3

    def test_wrong_normalization(self, rng):
        parts = self._parts(rng)
        theta = bipartite_superchannel_1wlocc(*parts)
        ups = bipartite_superchannel_1wlocc(*parts, k=2)
        bad = SuperchannelChoi(2 * ups.choi, ups.shape, ups.roles)
        rep = validate_bipartite_kext_superchannel(theta, bad, 2)
        assert not rep.feasible
        assert rep.certificate_residuals["marginal"] > 1e-3


def _product_choi(channels, pairs, order):
    """Choi of a tensor product of channels, each given (input label, output label), in ``order``."""
    mats, dims, labels = [], [], []
    for ch, (i, o) in zip(channels, pairs):
        mats.append(ch.canonical())
        dims += [ch.d_in, ch.d_out]
        labels += [i, o]
    return permute_systems(kron(*mats), SubsystemShape(dims, labels), order)


def _params(prob: ConicProblem, wit: dict) -> dict:
    from unext.conic import herm_to_params

    return {k: herm_to_params(v) for k, v in wit.items()}
