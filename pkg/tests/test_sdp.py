import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unext.errors import InfeasibleModel, InvalidExtension, ProblemTooLarge, ShapeMismatch
from unext.extend import comparison_marginal, extension_residuals
from unext.linalg import SubsystemShape, basis_ket, kron, proj
from unext.oracle import depolarizing_bs, erasure_alpha_bound
from unext.quantum import (
    _gamma_into,
    as_bipartite,
    choi_from_kraus,
    erasure_flag,
    isotropic_state,
    make_depolarizing,
    make_erasure,
    make_flagged_erasure,
    make_identity,
    make_semicausal_erasure,
    max_entangled_state,
    p2p,
    tensor_channels,
)
from unext.sdp import (
    MAX_ELL,
    alpha_of_ell,
    geo_channel_divergence_sdp,
    min_geo_upper_bound,
    unext_alpha_bipartite,
    unext_alpha_p2p,
    unext_alpha_state,
)

AB2 = SubsystemShape([2, 2], ["A", "B"])
AB3 = SubsystemShape([3, 3], ["A", "B"])


def random_channel(d_in, d_out, rng, n_kraus=4):
    g = rng.standard_normal((d_out * n_kraus, d_in)) + 1j * rng.standard_normal((d_out * n_kraus, d_in))
    q, _ = np.linalg.qr(g)
    return choi_from_kraus([q[i * d_out:(i + 1) * d_out, :] for i in range(n_kraus)], d_in, d_out)


def amplitude_damping(g: float):
    k0 = np.array([[1, 0], [0, math.sqrt(1 - g)]])
    k1 = np.array([[0, math.sqrt(g)], [0, 0]])
    return choi_from_kraus([k0, k1], 2, 2)


def classical_channel(t: np.ndarray):
    """Diagonal Choi of the stochastic matrix t[x, y] = Pr(y | x)."""
    return p2p(np.diag(t.reshape(-1)).astype(complex), *t.shape)


def cvxpy_unext_p2p(choi: np.ndarray, d: int, ell: int) -> float:
    """Unreduced SDP for a qubit-to-qubit style channel d -> d, built independently in cvxpy."""
    n = d**3
    p = cp.Variable((n, n), hermitian=True)
    n0 = cp.partial_trace(p, [d, d, d], axis=1)
    ns = [n0] + [cp.Variable((d * d, d * d), hermitian=True) for _ in range(ell)]
    m = cp.Variable((d * d, d * d), hermitian=True)
    y = cp.Variable()
    cons = [p >> 0, cp.partial_trace(p, [d, d, d], axis=2) == choi,
            cp.partial_trace(cp.partial_trace(p, [d, d, d], axis=2), [d, d], axis=1) == np.eye(d)]
    for i in range(1, ell + 1):
        cons.append(cp.bmat([[choi, ns[i]], [ns[i], ns[i - 1]]]) >> 0)
    cons.append(cp.bmat([[m, choi], [choi, ns[-1]]]) >> 0)
    cons.append(y * np.eye(d) - cp.partial_trace(m, [d, d], axis=1) >> 0)
    prob = cp.Problem(cp.Minimize(y), cons)
    prob.solve(solver=cp.CLARABEL)
    return 2.0 ** (ell - 1) * math.log2(y.value)


class TestIdentity:
    @pytest.mark.parametrize("d", [2, 3])
    @pytest.mark.parametrize("ell", [0, 3, 6, 10])
    def test_log_d(self, d, ell):
        r = unext_alpha_p2p(make_identity(d), ell)
        assert abs(r.value_bits - math.log2(d)) <= 1e-4
        assert r.alpha == alpha_of_ell(ell)
        assert abs(r.raw_value_bits - 2 * r.value_bits) <= 1e-12

    def test_result_fields(self):
        r = unext_alpha_p2p(make_identity(2), 4)
        doc = r.to_dict()
        assert doc["status"] == "optimal" and doc["ell"] == 4
        assert abs(doc["value_bits"] - 2.0**3 * math.log2(r.y_star)) <= 1e-12


class TestStates:
    @pytest.mark.parametrize("d,shape", [(2, AB2), (3, AB3)])
    def test_max_entangled(self, d, shape):
        r = unext_alpha_state(max_entangled_state(d), shape, 8)
        assert abs(r.value_bits - math.log2(d)) <= 1e-4

    def test_two_extendible_state(self):
        e = proj(basis_ket(1, 2))
        rho = 0.5 * max_entangled_state(2) + 0.5 * kron(np.eye(2) / 2, e)
        assert abs(unext_alpha_state(rho, AB2, 10).value_bits) <= 1e-5

    def test_isotropic_matches_channel(self):
        r = unext_alpha_state(isotropic_state(2, 0.925), AB2, 10)
        assert 0.2891 - 1e-3 <= r.value_bits <= 0.2891 + 0.02
        ch = unext_alpha_p2p(make_depolarizing(2, 0.1), 10)
        assert abs(r.value_bits - ch.value_bits) <= 1e-5


class TestDepolarizing:
    def test_reference_point(self):
        r = unext_alpha_p2p(make_depolarizing(2, 0.1), 10)
        assert 0.2891 <= r.value_bits <= 0.2891 + 0.02

    @pytest.mark.parametrize("p", [0.05, 0.1, 0.2])
    def test_above_oracle(self, p):
        v = unext_alpha_p2p(make_depolarizing(2, p), 10).value_bits
        o = depolarizing_bs(2, p).value_bits
        assert o <= v <= o + 0.02

    @pytest.mark.parametrize("p", [1 / 3, 0.4])
    def test_zero_when_two_extendible(self, p):
        assert unext_alpha_p2p(make_depolarizing(2, p), 10).value_bits <= 1e-4


class TestSemicausal:
    def test_erasure_quarter(self):
        v = unext_alpha_bipartite(make_semicausal_erasure(2, 0.25), 10).value_bits
        assert 0.75 <= v <= 0.77

    def test_erasure_full(self):
        assert abs(unext_alpha_bipartite(make_semicausal_erasure(2, 1.0), 10).value_bits) <= 1e-4

    @pytest.mark.parametrize("q", [0.0, 0.5, 1.0])
    def test_flagged_erasure_no_loss(self, q):
        v = unext_alpha_bipartite(make_flagged_erasure(2, 0.0, q), 10).value_bits
        assert abs(v - 1.0) <= 0.02
        assert abs(v - unext_alpha_p2p(make_identity(2), 10).value_bits) <= 0.02

    def test_relaxing_nonsignaling_cannot_increase(self):
        n = make_flagged_erasure(2, 0.3, 0.4)
        full = unext_alpha_bipartite(n, 4).value_bits
        relaxed = unext_alpha_bipartite(n, 4, nonsignaling=False).value_bits
        assert relaxed <= full + 1e-6


class TestProperties:
    @pytest.mark.parametrize("make", [lambda: make_erasure(2, 0.2), lambda: make_depolarizing(2, 0.15)])
    def test_monotone_in_ell(self, make):
        vals = [unext_alpha_p2p(make(), ell).value_bits for ell in (0, 1, 2, 4, 7, 10)]
        assert all(b <= a + 1e-5 for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("p", [0.5, 0.7])
    def test_zero_on_two_extendible_erasure(self, p):
        assert unext_alpha_p2p(make_erasure(2, p), 10).value_bits <= 1e-4

    @pytest.mark.parametrize("p", [0.0, 0.1, 0.2, 0.3, 0.4, 0.45])
    def test_erasure_below_alpha_bound(self, p):
        v = unext_alpha_p2p(make_erasure(2, p), 10).value_bits
        assert v <= erasure_alpha_bound(2, p, alpha_of_ell(10)).value_bits + 1e-4

    def test_subadditive(self):
        n1, n2 = amplitude_damping(0.3), make_depolarizing(2, 0.1)
        both = tensor_channels(n1, n2)
        joint = unext_alpha_p2p(p2p(both.choi, 4, 4), 2).value_bits
        assert joint <= unext_alpha_p2p(n1, 2).value_bits + unext_alpha_p2p(n2, 2).value_bits + 1e-4

    @settings(max_examples=8)
    @given(st.integers(min_value=0, max_value=2**32 - 1), st.sampled_from([1, 3, 6]))
    def test_witness_reproduces_value(self, seed, ell):
        n = random_channel(2, 2, np.random.default_rng(seed), n_kraus=2)
        r = unext_alpha_p2p(n, ell)
        assert r.value_bits >= -1e-6
        res = extension_residuals(as_bipartite(n), r.witness_extension)
        assert max(res.values()) <= 1e-6
        marg = comparison_marginal(as_bipartite(n), r.witness_extension)
        fixed = 0.5 * geo_channel_divergence_sdp(n, marg, ell)
        assert abs(fixed - r.value_bits) <= 1e-5

    @settings(max_examples=10)
    @given(st.integers(min_value=0, max_value=2**32 - 1), st.sampled_from([0, 1, 3, 6]))
    def test_classical_telescoping(self, seed, ell):
        rng = np.random.default_rng(seed)
        tn = rng.dirichlet(np.ones(3), size=2)
        tm = rng.dirichlet(np.ones(3), size=2)
        a = alpha_of_ell(ell)
        expect = max(math.log2(np.sum(tn[x] ** a * tm[x] ** (1 - a))) for x in range(2)) / (a - 1)
        got = geo_channel_divergence_sdp(classical_channel(tn), classical_channel(tm).choi, ell)
        assert abs(got - expect) <= 1e-5


class TestIndependentRoute:
    @pytest.mark.parametrize("ell", [0, 1, 2])
    def test_depolarizing(self, ell):
        n = make_depolarizing(2, 0.1)
        assert abs(unext_alpha_p2p(n, ell).value_bits - cvxpy_unext_p2p(n.choi, 2, ell)) <= 1e-5

    @pytest.mark.parametrize("seed", [3, 17])
    def test_random_full_rank(self, seed):
        n = random_channel(2, 2, np.random.default_rng(seed), n_kraus=4)
        assert abs(unext_alpha_p2p(n, 1).value_bits - cvxpy_unext_p2p(n.choi, 2, 1)) <= 1e-5


class TestMinGeoUpperBound:
    def test_full_rank_replacer_candidate(self):
        n = make_depolarizing(2, 0.2)
        assert min_geo_upper_bound(n, [np.kron(n.choi, np.eye(2) / 2)]) <= 1e-9

    def test_erasure_split_candidate(self):
        p = 0.3
        flag = erasure_flag(2)
        to_b1 = np.kron(_gamma_into(2), flag)
        to_b2 = to_b1.reshape(2, 3, 3, 2, 3, 3).transpose(0, 2, 1, 3, 5, 4).reshape(18, 18)
        cand = (1 - p) * to_b1 + p * to_b2
        assert abs(min_geo_upper_bound(make_erasure(2, p), [cand])) <= 1e-9

    def test_identity_product_candidates(self):
        n = make_identity(2)
        sigmas = [np.diag([t, 1 - t]) for t in (0.5, 0.6, 0.8)]
        vals = [min_geo_upper_bound(n, [np.kron(n.choi, s)]) for s in sigmas]
        assert abs(vals[0] - 1.0) <= 1e-9
        assert all(v > vals[0] for v in vals[1:])
        assert abs(min_geo_upper_bound(n, [np.kron(n.choi, s) for s in sigmas]) - 1.0) <= 1e-9
        assert abs(vals[1] - 0.5 * math.log2(1 / 0.6 + 1 / 0.4)) <= 1e-9

    def test_rejects_invalid_candidate(self):
        n = make_erasure(2, 0.3)
        wrong = np.kron(make_erasure(2, 0.5).choi, np.eye(3) / 3)
        with pytest.raises(InvalidExtension):
            min_geo_upper_bound(n, [wrong])

    def test_needs_candidates(self):
        with pytest.raises(ValueError):
            min_geo_upper_bound(make_identity(2), [])


class TestErrors:
    def test_ell_cap(self):
        with pytest.raises(ProblemTooLarge):
            unext_alpha_p2p(make_identity(2), MAX_ELL + 1)
        with pytest.raises(ValueError):
            unext_alpha_p2p(make_identity(2), -1)

    def test_size_cap(self):
        with pytest.raises(ProblemTooLarge):
            unext_alpha_p2p(make_depolarizing(8, 0.1), MAX_ELL)

    def test_not_trace_preserving(self):
        with pytest.raises(InfeasibleModel):
            unext_alpha_p2p(p2p(2 * make_identity(2).choi, 2, 2, cp_only=True), 2)

    def test_p2p_shape(self):
        with pytest.raises(ShapeMismatch):
            unext_alpha_p2p(tensor_channels(make_identity(2), make_identity(2)), 2)

    def test_comparison_dimension(self):
        with pytest.raises(ShapeMismatch):
            geo_channel_divergence_sdp(make_identity(2), np.eye(9), 2)
