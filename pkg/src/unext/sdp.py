"""Semidefinite programs for the alpha-geometric unextendible entanglement.

For alpha = 1 + 2^-l the channel divergence D_alpha(N || M) equals
2^l log2 y* where y* minimizes y subject to

    y I - Tr_out[M']       >= 0
    [[M', G], [G, N^l]]     >= 0
    [[G, N^i], [N^i, N^{i-1}]] >= 0,   i = 1..l

with G the Choi operator of N and N^0 the Choi operator of the comparison
channel.  Unextendible entanglement takes N^0 from an extension of N and
carries a factor 1/2, so the reported value is 2^(l-1) log2 y*.

Every block that the chain forces onto supp(G) is parametrized on that
support.  This is an exact reformulation; it removes the directions in which
the original LMIs have no interior and keeps the interior-point solver well
conditioned for rank-deficient Choi operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conic import MAX_PSD_ROWS, Affine, ConicProblem, SolveReport, block, solve
from .divergence import min_geo_entropy_channel
from .errors import InfeasibleModel, InvalidExtension, ProblemTooLarge, ShapeMismatch, SolverFailure
from .extend import (
    _support_of_extension,
    build_bipartite_extension_constraints,
    comparison_marginal,
    extension_residuals,
)
from .linalg import RANK_TOL, SubsystemShape, support_basis
from .quantum import BipartiteChannel, ChoiChannel, as_bipartite, bipartite, state_as_channel

MAX_ELL = 12
CANDIDATE_TOL = 1e-6


@dataclass
class GeoSdpResult:
    value_bits: float  # 2^(l-1) log2 y*, includes the factor 1/2
    y_star: float
    ell: int
    alpha: float
    report: SolveReport
    witness_extension: np.ndarray | None
    raw_value_bits: float  # 2^l log2 y*, the divergence of N from the optimal marginal

    def to_dict(self) -> dict:
        return {"value_bits": self.value_bits, "raw_value_bits": self.raw_value_bits, "y_star": self.y_star,
                "ell": self.ell, "alpha": self.alpha, **self.report.to_dict()}


def alpha_of_ell(ell: int) -> float:
    return 1.0 + 2.0 ** (-ell)


def _check_ell(ell: int) -> int:
    if int(ell) != ell or ell < 0:
        raise ValueError("ell must be a non-negative integer")
    if ell > MAX_ELL:
        raise ProblemTooLarge(f"ell = {ell} exceeds the cap {MAX_ELL}")
    return int(ell)


def _check_size(problem: ConicProblem) -> None:
    rows = sum(2 * expr.rows for _, expr in problem.psd_blocks)
    if rows > MAX_PSD_ROWS:
        raise ProblemTooLarge(f"{rows} PSD rows after real embedding exceed the cap {MAX_PSD_ROWS}")


def _check_chain_size(gamma_n: np.ndarray, d_in: int, ell: int, rank_tol: float, extra: int = 0) -> None:
    """Reject before building: the affine maps of an oversized problem can exhaust memory."""
    r = support_basis(gamma_n, rank_tol)[0].shape[1]
    big = gamma_n.shape[0]
    rows = extra + d_in + r + big + (2 * r * ell if ell else 0)
    if 2 * rows > MAX_PSD_ROWS:
        raise ProblemTooLarge(f"{2 * rows} PSD rows after real embedding exceed the cap {MAX_PSD_ROWS}")


def add_geo_chain(problem: ConicProblem, gamma_n: np.ndarray, n0, dims: tuple[int, int, int, int], ell: int,
                  rank_tol: float = RANK_TOL) -> Affine:
    """Add y, M, N^1..N^l and the LMI chain; return the scalar y.

    ``n0`` is an Affine expression or a constant matrix in the order
    (A, B, A', B') of ``dims``.
    """
    if not isinstance(n0, Affine):
        n0 = Affine.constant(np.asarray(n0, dtype=complex))
    big = gamma_n.shape[0]
    v, w = support_basis(gamma_n, rank_tol)
    r = v.shape[1]
    g_red = Affine.constant(np.diag(w).astype(complex))
    vh = v.conj().T
    y = problem.scalar("y")
    m = problem.var("M", r)
    ns = [problem.var(f"N{i}", r) for i in range(1, ell + 1)]
    if ell == 0:
        problem.add_psd("chain:M", block([[m, g_red.sandwich(np.eye(r), vh)], [g_red.sandwich(v, np.eye(r)), n0]]))
    else:
        problem.add_psd("chain:M", block([[m, g_red], [g_red, ns[-1]]]))
        n1 = ns[0]
        problem.add_psd("chain:1", block([[g_red, n1.sandwich(np.eye(r), vh)], [n1.sandwich(v, np.eye(r)), n0]]))
        for i in range(2, ell + 1):
            problem.add_psd(f"chain:{i}", block([[g_red, ns[i - 1]], [ns[i - 1], ns[i - 2]]]))
    shape = SubsystemShape(list(dims), ["A", "B", "A'", "B'"])
    d_in = dims[0] * dims[1]
    full_m = m.sandwich(v, vh)
    if full_m.rows != big:
        raise ShapeMismatch("Choi dimension does not match dims")
    problem.add_psd("y I - Tr_out M", y.kron_identity(d_in) - full_m.ptrace(shape, ["A", "B"]))
    problem.minimize(y)
    return y


def _finish(problem: ConicProblem, ell: int, tol: float | None) -> tuple[SolveReport, dict, float]:
    _check_size(problem)
    rep, wit = solve(problem, tol)
    if rep.status == "infeasible":
        raise InfeasibleModel("unextendibility SDP reported infeasible; the input is probably not a valid channel",
                              rep.status, rep)
    if rep.status not in ("optimal", "inaccurate"):
        raise SolverFailure(f"unextendibility SDP ended with status {rep.status}", rep.status, rep)
    y = float(wit["y"].real[0, 0])
    if y <= 0:
        raise SolverFailure(f"non-positive optimum y = {y}", rep.status, rep)
    return rep, wit, y


def unext_alpha_bipartite(n: BipartiteChannel | ChoiChannel, ell: int, tol: float | None = None,
                          nonsignaling: bool = True, rank_tol: float = RANK_TOL) -> GeoSdpResult:
    """Alpha-geometric unextendible entanglement at alpha = 1 + 2^-ell."""
    ell = _check_ell(ell)
    bn = as_bipartite(n)
    _check_chain_size(bn.choi, bn.dims[0] * bn.dims[1], ell, rank_tol,
                      _support_of_extension(bn, rank_tol).shape[1])
    problem, model = build_bipartite_extension_constraints(bn, nonsignaling=nonsignaling, rank_tol=rank_tol)
    add_geo_chain(problem, bn.choi, model.n0, bn.dims, ell, rank_tol)
    rep, wit, y = _finish(problem, ell, tol)
    gp = model.basis @ wit[model.psd_var] @ model.basis.conj().T
    raw = 2.0**ell * math.log2(y)
    return GeoSdpResult(0.5 * raw, y, ell, alpha_of_ell(ell), rep, 0.5 * (gp + gp.conj().T), raw)


def unext_alpha_p2p(n: ChoiChannel, ell: int, tol: float | None = None, rank_tol: float = RANK_TOL) -> GeoSdpResult:
    """Point-to-point channel A -> B; the extension is a channel A -> B1 B2."""
    if len(n.inputs) != 1 or len(n.outputs) != 1:
        raise ShapeMismatch("point-to-point SDP needs one input and one output system")
    return unext_alpha_bipartite(as_bipartite(n), ell, tol, True, rank_tol)


def unext_alpha_state(rho: np.ndarray, shape: SubsystemShape, ell: int, tol: float | None = None,
                      rank_tol: float = RANK_TOL) -> GeoSdpResult:
    """Bipartite state rho_AB, treated as a channel with trivial input."""
    da, db = shape.dims
    return unext_alpha_bipartite(state_as_channel(np.asarray(rho), da, db), ell, tol, True, rank_tol)


def geo_channel_divergence_sdp(n: BipartiteChannel | ChoiChannel, m: BipartiteChannel | ChoiChannel | np.ndarray,
                               ell: int, tol: float | None = None, rank_tol: float = RANK_TOL) -> float:
    """D_alpha(N || M) in bits for alpha = 1 + 2^-ell, with M fixed."""
    ell = _check_ell(ell)
    bn = as_bipartite(n)
    if isinstance(m, (BipartiteChannel, ChoiChannel)):
        gm = as_bipartite(m).choi
    else:
        gm = np.asarray(m, dtype=complex)
    if gm.shape != bn.choi.shape:
        raise ShapeMismatch("comparison Choi operator has the wrong dimension")
    _check_chain_size(bn.choi, bn.dims[0] * bn.dims[1], ell, rank_tol)
    problem = ConicProblem()
    add_geo_chain(problem, bn.choi, gm, bn.dims, ell, rank_tol)
    _, _, y = _finish(problem, ell, tol)
    return 2.0**ell * math.log2(y)


def min_geo_upper_bound(n: BipartiteChannel | ChoiChannel, candidates, tol: float = CANDIDATE_TOL) -> float:
    """min over candidate extensions of (1/2) D_0(N || marginal of the candidate).

    This is an upper bound on the min-geometric unextendible entanglement
    because the exact quantity infimizes over every extension.  Candidates
    are extension Choi operators ordered (A, B1, B2, A', B1', B2').
    """
    bn = as_bipartite(n)
    best = math.inf
    if not candidates:
        raise ValueError("at least one candidate extension is required")
    for c in candidates:
        gp = np.asarray(c.choi if hasattr(c, "choi") else c, dtype=complex)
        res = extension_residuals(bn, gp, nonsignaling=bn.dims[1] > 1)
        worst = max(res.values())
        if worst > tol:
            raise InvalidExtension(f"candidate violates the extension constraints: {res}")
        marg = bipartite(comparison_marginal(bn, gp), bn.dims, check=False)
        best = min(best, 0.5 * float(min_geo_entropy_channel(bn, marg)))
    return best
