"""k-extendibility: constraint builders, feasibility tests and validators.

Channel extensions are written for the bipartite layout A B -> A' B', where
Bob's input B and output B' are duplicated.  A point-to-point channel is the
special case dim B = dim A' = 1 and a state is the case dim A = dim B = 1, so
one builder serves all three.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conic import Affine, ConicProblem, SolveReport, solve
from .errors import ShapeMismatch, SolverFailure
from .linalg import (
    RANK_TOL,
    SubsystemShape,
    kron,
    partial_trace,
    permutation_unitary,
    permute_systems,
    support_basis,
)
from .quantum import (
    BipartiteChannel,
    ChoiChannel,
    SuperchannelChoi,
    as_bipartite,
    isotropic_state,
    validate_superchannel,
)

EXT_LABELS = ("A", "B1", "B2", "A'", "B1'", "B2'")
KINDS = ("state", "p2p_channel", "superchannel", "bipartite_channel", "bipartite_superchannel")


@dataclass(frozen=True)
class ExtendibilitySpec:
    kind: str
    k: int
    base: SubsystemShape
    extension: SubsystemShape

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown extendibility kind {self.kind!r}")
        if self.k < 2:
            raise ValueError("k must be at least 2")


@dataclass
class FeasibilityReport:
    feasible: bool
    certificate_residuals: dict = field(default_factory=dict)
    solver: SolveReport | None = None
    margin: float = float("nan")


@dataclass
class ExtensionModel:
    """Affine handles on an extension Gamma^P and its comparison marginal N^0."""

    gamma_p: Affine
    n0: Affine
    shape_p: SubsystemShape
    basis: np.ndarray  # columns span the allowed support of Gamma^P
    psd_var: str


def ext_shape(n: BipartiteChannel) -> SubsystemShape:
    da, db, dap, dbp = n.dims
    return SubsystemShape([da, db, db, dap, dbp, dbp], EXT_LABELS)


def _support_of_extension(n: BipartiteChannel, rank_tol: float) -> np.ndarray:
    """Basis of supp(Gamma^N x I_{B2}) x H_{B2'} in the extension ordering."""
    da, db, dap, dbp = n.dims
    v, _ = support_basis(n.choi, rank_tol)
    raw = np.kron(v, np.eye(db * dbp))  # rows in (A, B1, A', B1', B2, B2')
    src = SubsystemShape([da, db, dap, dbp, db, dbp], ["A", "B1", "A'", "B1'", "B2", "B2'"])
    cols = raw.shape[1]
    out = raw.reshape(src.dims + (cols,))
    perm = [src.index(s) for s in EXT_LABELS] + [len(src.dims)]
    w = out.transpose(perm).reshape(-1, cols)
    w[np.abs(w) < 1e-14] = 0.0
    return w


def build_bipartite_extension_constraints(
    n: BipartiteChannel | ChoiChannel,
    problem: ConicProblem | None = None,
    nonsignaling: bool = True,
    reduce: bool = True,
    rank_tol: float = RANK_TOL,
    prefix: str = "P",
) -> tuple[ConicProblem, ExtensionModel]:
    """Add an extension Gamma^P of ``n`` and its constraints to ``problem``.

    Emits positivity, Tr_{B2'} Gamma^P = Gamma^N x I_{B2}, the redundant
    trace-preservation equality and (optionally) no signalling from B1 to the
    rest.  N^0 = Tr_{B1 B1'}[Gamma^P] / d_B relabelled to (A, B, A', B').
    When ``reduce`` is set the variable lives on the subspace that the
    marginal condition already forces, which keeps the program strictly
    feasible for rank-deficient Choi operators.
    """
    n = as_bipartite(n)
    problem = ConicProblem() if problem is None else problem
    da, db, dap, dbp = n.dims
    shp = ext_shape(n)
    if reduce:
        w = _support_of_extension(n, rank_tol)
    else:
        w = np.eye(shp.total)
    p = problem.var(prefix, w.shape[1])
    problem.add_psd(f"{prefix}>=0", p)
    gp = p.sandwich(w, w.conj().T)

    # Tr_{B2'} Gamma^P = Gamma^N x I_{B2}
    sub = shp.sub(["A", "B1", "B2", "A'", "B1'"])
    rhs = permute_systems(
        kron(n.choi, np.eye(db)),
        SubsystemShape([da, db, dap, dbp, db], ["A", "B1", "A'", "B1'", "B2"]),
        sub.labels,
    )
    problem.add_eq(f"{prefix}:marginal", gp.ptrace(shp, sub.labels) - Affine.constant(rhs))

    # redundant trace preservation
    ins = ["A", "B1", "B2"]
    problem.add_eq(f"{prefix}:tp", gp.ptrace(shp, ins) - Affine.constant(np.eye(shp.dim_of(ins))))

    if nonsignaling and db > 1:
        keep = ["A", "B1", "B2", "A'", "B2'"]
        lhs = gp.ptrace(shp, keep)
        rest = ["A", "B2", "A'", "B2'"]
        red = gp.ptrace(shp, rest).kron_identity(db) * (1.0 / db)
        red = red.permute(SubsystemShape([shp.dim(s) for s in rest] + [db], rest + ["B1"]), keep)
        problem.add_eq(f"{prefix}:nonsignaling", lhs - red)

    n0 = gp.ptrace(shp, ["A", "B2", "A'", "B2'"]) * (1.0 / db)
    return problem, ExtensionModel(gp, n0, shp, w, prefix)


def build_p2p_extension_constraints(n: ChoiChannel, problem: ConicProblem | None = None, reduce: bool = True,
                                    rank_tol: float = RANK_TOL) -> tuple[ConicProblem, ExtensionModel]:
    """Extension Gamma^P_{A B1 B2} of a point-to-point channel A -> B."""
    return build_bipartite_extension_constraints(as_bipartite(n), problem, True, reduce, rank_tol)


def extension_residuals(n: BipartiteChannel | ChoiChannel, gamma_p: np.ndarray, nonsignaling: bool = True) -> dict:
    """Numerical residuals of every extension constraint for a concrete Gamma^P.

    ``gamma_p`` is ordered (A, B1, B2, A', B1', B2'); for point-to-point
    channels this coincides with the order (A, B1, B2).
    """
    n = as_bipartite(n)
    da, db, dap, dbp = n.dims
    shp = ext_shape(n)
    g = np.asarray(gamma_p, dtype=complex)
    if g.shape[0] != shp.total:
        raise ShapeMismatch(f"extension has dim {g.shape[0]}, expected {shp.total}")
    res = {"psd": max(0.0, -float(np.linalg.eigvalsh(0.5 * (g + g.conj().T))[0]))}
    sub = shp.sub(["A", "B1", "B2", "A'", "B1'"])
    rhs = permute_systems(kron(n.choi, np.eye(db)),
                          SubsystemShape([da, db, dap, dbp, db], ["A", "B1", "A'", "B1'", "B2"]), sub.labels)
    res["marginal"] = float(np.max(np.abs(partial_trace(g, shp, sub.labels) - rhs)))
    tp = partial_trace(g, shp, ["A", "B1", "B2"])
    res["tp"] = float(np.max(np.abs(tp - np.eye(tp.shape[0]))))
    if nonsignaling:
        keep = ["A", "B1", "B2", "A'", "B2'"]
        rest = ["A", "B2", "A'", "B2'"]
        red = permute_systems(kron(partial_trace(g, shp, rest), np.eye(db)) / db,
                              SubsystemShape([shp.dim(s) for s in rest] + [db], rest + ["B1"]), keep)
        res["nonsignaling"] = float(np.max(np.abs(partial_trace(g, shp, keep) - red)))
    return res


def comparison_marginal(n: BipartiteChannel | ChoiChannel, gamma_p: np.ndarray) -> np.ndarray:
    """Choi of Tr_{B1'} o P o A^pi_{B1}, in the order (A, B, A', B')."""
    n = as_bipartite(n)
    shp = ext_shape(n)
    return partial_trace(gamma_p, shp, ["A", "B2", "A'", "B2'"]) / n.dims[1]


# --- k-extendibility of states and channels -------------------------------------------


def _transposition(k: int, j: int) -> list[int]:
    pi = list(range(k))
    pi[0], pi[j] = pi[j], pi[0]
    return pi


def kext_state_feasible(rho: np.ndarray, shape: SubsystemShape, k: int = 2, tol: float | None = None,
                        feas_tol: float = 1e-7) -> FeasibilityReport:
    """Search for a permutation-invariant extension omega_{A B1..Bk} of rho_{AB}.

    Solved as: maximize t subject to omega - t I >= 0 and the marginal and
    invariance equalities.  The state is declared k-extendible when the
    optimal margin t is at least ``-feas_tol``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    la, lb = shape.labels
    da, db = shape.dims
    bl = [f"B{i}" for i in range(1, k + 1)]
    shp = SubsystemShape([da] + [db] * k, ["A"] + bl)
    prob = ConicProblem()
    om = prob.var("omega", shp.total)
    t = prob.scalar("t")
    prob.add_psd("omega-tI", om - t.kron_identity(shp.total))
    prob.add_eq("marginal", om.ptrace(shp, ["A", "B1"]) - Affine.constant(rho))
    for j in range(1, k):
        u = kron(np.eye(da), permutation_unitary(k, db, _transposition(k, j)))
        prob.add_eq(f"swap(1,{j + 1})", om.sandwich(u, u.T) - om)
    prob.minimize(-t)
    rep, wit = solve(prob, tol)
    if rep.status not in ("optimal", "inaccurate"):
        if rep.status == "infeasible":
            return FeasibilityReport(False, {}, rep, float("-inf"))
        raise SolverFailure(f"k-extendibility solve ended with status {rep.status}", rep.status, rep)
    margin = float(wit["t"].real[0, 0])
    om_v = wit["omega"]
    res = {"marginal": float(np.max(np.abs(partial_trace(om_v, shp, ["A", "B1"]) - rho))),
           "psd": max(0.0, -float(np.linalg.eigvalsh(om_v)[0]))}
    for j in range(1, k):
        u = kron(np.eye(da), permutation_unitary(k, db, _transposition(k, j)))
        res[f"swap(1,{j + 1})"] = float(np.max(np.abs(u @ om_v @ u.T - om_v)))
    return FeasibilityReport(margin >= -feas_tol, res, rep, margin)


def kext_isotropic_threshold(d: int, k: int = 2, tol: float = 1e-5, solver_tol: float | None = None) -> float:
    """Largest fidelity F for which the isotropic state is k-extendible (bisection)."""
    lo, hi = 1.0 / d**2, 1.0
    shape = SubsystemShape([d, d], ["A", "B"])
    if not kext_state_feasible(isotropic_state(d, lo), shape, k, solver_tol).feasible:
        raise SolverFailure("maximally mixed isotropic state reported non-extendible")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if kext_state_feasible(isotropic_state(d, mid), shape, k, solver_tol).feasible:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def kext_channel_feasible(n: ChoiChannel, k: int = 2, tol: float | None = None,
                          feas_tol: float = 1e-7) -> tuple[FeasibilityReport, np.ndarray | None]:
    """Permutation-covariant k-extension P_{A -> B1..Bk} of a point-to-point channel."""
    da, db = n.d_in, n.d_out
    bl = [f"B{i}" for i in range(1, k + 1)]
    shp = SubsystemShape([da] + [db] * k, ["A"] + bl)
    prob = ConicProblem()
    g = prob.var("P", shp.total)
    t = prob.scalar("t")
    prob.add_psd("P-tI", g - t.kron_identity(shp.total))
    prob.add_eq("marginal", g.ptrace(shp, ["A", "B1"]) - Affine.constant(n.canonical()))
    prob.add_eq("tp", g.ptrace(shp, ["A"]) - Affine.constant(np.eye(da)))
    for j in range(1, k):
        u = kron(np.eye(da), permutation_unitary(k, db, _transposition(k, j)))
        prob.add_eq(f"swap(1,{j + 1})", g.sandwich(u, u.T) - g)
    prob.minimize(-t)
    rep, wit = solve(prob, tol)
    if rep.status not in ("optimal", "inaccurate"):
        return FeasibilityReport(False, {}, rep, float("-inf")), None
    margin = float(wit["t"].real[0, 0])
    return FeasibilityReport(margin >= -feas_tol, {}, rep, margin), wit["P"]


# --- superchannel extensions ----------------------------------------------------------------


def _relabelled(ch: ChoiChannel, names) -> tuple[np.ndarray, SubsystemShape]:
    dims = [ch.shape.dim(s) for s in ch.inputs + ch.outputs]
    return ch.canonical(), SubsystemShape(dims, names)


def kext_superchannel_1wlocc(pre, post, k: int) -> SuperchannelChoi:
    """Extension sum_x E^x (C -> A) x (D^x)^{x k} (B_i -> D_i) of a one-way LOCC superchannel."""
    total = None
    for e, dch in zip(pre, post):
        parts = [_relabelled(e, ["C", "A"])]
        parts += [_relabelled(dch, [f"B{i}", f"D{i}"]) for i in range(1, k + 1)]
        mat = kron(*[p[0] for p in parts])
        shape = parts[0][1]
        for _, s in parts[1:]:
            shape = shape + s
        order = ["A"] + [f"D{i}" for i in range(1, k + 1)] + ["C"] + [f"B{i}" for i in range(1, k + 1)]
        term = permute_systems(mat, shape, order)
        total = term if total is None else total + term
    roles = {"A": ("A",), "D": tuple(f"D{i}" for i in range(1, k + 1)), "C": ("C",),
             "B": tuple(f"B{i}" for i in range(1, k + 1))}
    return SuperchannelChoi(total, shape.reordered(order), roles)


def validate_kext_superchannel(theta: SuperchannelChoi, upsilon: SuperchannelChoi, k: int,
                               marginal_scale: float = 1.0) -> FeasibilityReport:
    """Residuals of the k-extension conditions for a point-to-point superchannel.

    Marginal: Tr_{D_2..D_k} Gamma^Upsilon = marginal_scale * Gamma^Theta x I_{B_2..B_k}.
    Covariance: W_D Gamma W_D^dagger = W_B^dagger Gamma W_B for transpositions.
    With unnormalized Choi operators the trace map has Choi I, so the scale is 1.
    """
    ru = upsilon.roles
    if len(ru["D"]) != k or len(ru["B"]) != k:
        raise ShapeMismatch(f"upsilon must carry {k} copies of D and B")
    for i in range(k):
        if upsilon.shape.dim(ru["D"][i]) != theta.dim("D") or upsilon.shape.dim(ru["B"][i]) != theta.dim("B"):
            raise ShapeMismatch("replica dimensions differ from the base superchannel")
    shp = upsilon.shape
    g = upsilon.choi
    res = {}
    for key, val in validate_superchannel(theta).items():
        res[f"theta:{key}"] = val
    for key, val in validate_superchannel(upsilon).items():
        res[f"upsilon:{key}"] = val
    keep = list(ru["A"]) + [ru["D"][0]] + list(ru["C"]) + list(ru["B"])
    lhs = partial_trace(g, shp, keep)
    d_b = theta.dim("B")
    base_labels = list(ru["A"]) + [ru["D"][0]] + list(ru["C"]) + [ru["B"][0]]
    rest_b = list(ru["B"][1:])
    rhs_shape = SubsystemShape([shp.dim(s) for s in base_labels] + [d_b] * len(rest_b), base_labels + rest_b)
    rhs = permute_systems(kron(theta.choi, np.eye(d_b ** (k - 1))) * marginal_scale, rhs_shape, keep)
    res["marginal"] = float(np.max(np.abs(lhs - rhs)))
    d_d = theta.dim("D")
    n_a, n_c = theta.dim("A"), theta.dim("C")
    perm_res = 0.0
    for j in range(1, k):
        wd = permutation_unitary(k, d_d, _transposition(k, j))
        wb = permutation_unitary(k, d_b, _transposition(k, j))
        ud = kron(np.eye(n_a), wd, np.eye(n_c * d_b**k))
        ub = kron(np.eye(n_a * d_d**k * n_c), wb)
        diff = ud @ g @ ud.T - ub.T @ g @ ub
        perm_res = max(perm_res, float(np.max(np.abs(diff))))
    res["covariance"] = perm_res
    return FeasibilityReport(all(v <= 1e-7 for v in res.values()), res, None)


def bipartite_superchannel_roles(k: int | None = None) -> dict:
    """Role groups for a bipartite superchannel (AB -> A'B') -> (CD -> C'D')."""
    if k is None:
        return {"A": ("A", "B"), "D": ("C'", "D'"), "C": ("C", "D"), "B": ("A'", "B'")}
    bs = tuple(f"B{i}" for i in range(1, k + 1))
    dps = tuple(f"D'{i}" for i in range(1, k + 1))
    ds = tuple(f"D{i}" for i in range(1, k + 1))
    bps = tuple(f"B'{i}" for i in range(1, k + 1))
    return {"A": ("A",) + bs, "D": ("C'",) + dps, "C": ("C",) + ds, "B": ("A'",) + bps}


def bipartite_superchannel_1wlocc(alice_pre, alice_post, bob_pre, bob_post, k: int | None = None) -> SuperchannelChoi:
    """One-way LOCC bipartite superchannel and, for k given, its product-copied extension.

    For each outcome x: Alice's instrument element E^x (C -> A), Alice's
    post-processing G^x (A' -> C'), and Bob's channels F^x (D -> B) and
    H^x (B' -> D').  Bob's maps are copied onto every replica.
    """
    roles = bipartite_superchannel_roles(k)
    order = sum((roles[r] for r in "ADCB"), ())
    reps = [""] if k is None else [str(i) for i in range(1, k + 1)]
    total = None
    for e, g, f, h in zip(alice_pre, alice_post, bob_pre, bob_post):
        parts = [_relabelled(e, ["C", "A"]), _relabelled(g, ["A'", "C'"])]
        for i in reps:
            parts.append(_relabelled(f, [f"D{i}", f"B{i}"]))
            parts.append(_relabelled(h, [f"B'{i}", f"D'{i}"]))
        mat = kron(*[p[0] for p in parts])
        shape = parts[0][1]
        for _, s in parts[1:]:
            shape = shape + s
        term = permute_systems(mat, shape, order)
        total = term if total is None else total + term
    return SuperchannelChoi(total, shape.reordered(order), roles)


def validate_bipartite_kext_superchannel(theta: SuperchannelChoi, upsilon: SuperchannelChoi, k: int) -> FeasibilityReport:
    """Residuals of covariance, no signalling and marginality for a bipartite k-extension."""
    shp = upsilon.shape
    g = upsilon.choi
    bs = [f"B{i}" for i in range(1, k + 1)]
    dps = [f"D'{i}" for i in range(1, k + 1)]
    ds = [f"D{i}" for i in range(1, k + 1)]
    bps = [f"B'{i}" for i in range(1, k + 1)]
    res = {}
    for key, val in validate_superchannel(theta).items():
        res[f"theta:{key}"] = val
    for key, val in validate_superchannel(upsilon).items():
        res[f"upsilon:{key}"] = val

    # permutation covariance on D', B, D, B' simultaneously
    cov = 0.0
    for j in range(1, k):
        pi = _transposition(k, j)
        order = list(shp.labels)
        new = list(order)
        for group in (bs, dps, ds, bps):
            for a, b in zip(group, [group[p] for p in pi]):
                new[order.index(a)] = b
        permuted = permute_systems(g, shp, new)
        cov = max(cov, float(np.max(np.abs(permuted - g))))
    res["covariance"] = cov

    # Tr_{D'_{2..k}} G = Tr_{D'_{2..k} B'_{2..k}} G x I_{B'_{2..k}} / |B'|^{k-1}
    keep = [s for s in shp.labels if s not in dps[1:]]
    lhs = partial_trace(g, shp, keep)
    keep2 = [s for s in keep if s not in bps[1:]]
    red = partial_trace(g, shp, keep2)
    d_bp = shp.dim("B'1")
    extra = SubsystemShape([shp.dim(s) for s in keep2] + [d_bp] * (k - 1), keep2 + bps[1:])
    rhs = permute_systems(kron(red, np.eye(d_bp ** (k - 1))) / d_bp ** (k - 1), extra, keep)
    res["nonsignaling"] = float(np.max(np.abs(lhs - rhs)))

    # Tr_{B_{2..k} D'_{2..k}} G = Gamma^Theta x I_{B'_{2..k} D_{2..k}}
    keep3 = [s for s in shp.labels if s not in bs[1:] + dps[1:]]
    lhs3 = partial_trace(g, shp, keep3)
    base = ["A", "B1", "C'", "D'1", "C", "D1", "A'", "B'1"]
    others = bps[1:] + ds[1:]
    dim_o = int(np.prod([shp.dim(s) for s in others])) if others else 1
    rshape = SubsystemShape([shp.dim(s) for s in base] + [shp.dim(s) for s in others], base + others)
    rhs3 = permute_systems(kron(theta.choi, np.eye(dim_o)), rshape, keep3)
    res["marginal"] = float(np.max(np.abs(lhs3 - rhs3)))
    return FeasibilityReport(all(v <= 1e-7 for v in res.values()), res, None)
