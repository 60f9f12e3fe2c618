"""Closed-form values and bounds for identity, erasure, depolarizing and semicausal erasure channels.

All values are in bits and carry the factor 1/2 of the unextendible
entanglement, matching ``unext.sdp``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidDimension, InvalidProbability, NotApplicable
from .linalg import RANK_TOL, support_basis
from .quantum import BipartiteChannel, ChoiChannel


@dataclass(frozen=True)
class OracleValue:
    value_bits: float
    regime: str
    is_exact: bool

    def __float__(self) -> float:
        return float(self.value_bits)


def _d(d: int) -> int:
    if int(d) != d or d < 2:
        raise InvalidDimension(f"dimension must be an integer >= 2, got {d}")
    return int(d)


def _p(p: float, hi: float = 1.0) -> float:
    p = float(p)
    if not 0.0 <= p <= hi:
        raise InvalidProbability(f"p = {p} outside [0, {hi}]")
    return p


def _xlogx_ratio(a: float, b: float) -> float:
    """a log2(a / b) with 0 log 0 = 0."""
    return 0.0 if a == 0 else a * math.log2(a / b)


def identity_unext(d: int) -> OracleValue:
    return OracleValue(math.log2(_d(d)), "identity", True)


def erasure_bs_bound(d: int, p: float) -> OracleValue:
    """Upper bound at alpha = 1 for the erasure channel; zero once it is two-extendible."""
    d = _d(d)
    p = _p(p)
    if p > 0.5:
        return OracleValue(0.0, "p > 1/2", True)
    if p <= 1.0 / (d + 1):
        val = (1 - p) * math.log2(d) - 0.5 * math.log2((d * d - 1) * p + 1)
        return OracleValue(val, "p <= 1/(d+1)", p == 0)
    val = 0.5 * (_xlogx_ratio(1 - p, p) + _xlogx_ratio(p, 1 - p))
    return OracleValue(val, "1/(d+1) < p <= 1/2", p == 0.5)


def erasure_alpha_bound(d: int, p: float, alpha: float) -> OracleValue:
    """Upper bound for alpha in (0,1) or (1,2]; alpha = 0 returns the limit and alpha = 1 the BS bound."""
    d = _d(d)
    p = _p(p)
    alpha = float(alpha)
    if not 0.0 <= alpha <= 2.0:
        raise ValueError("alpha must lie in [0, 2]")
    if p > 0.5:
        return OracleValue(0.0, "p > 1/2", True)
    if alpha == 1.0:
        return erasure_bs_bound(d, p)
    if p == 0:
        return OracleValue(math.log2(d), "p = 0", True)
    if alpha == 0.0:
        return OracleValue(0.0, "alpha -> 0", False)
    t = d ** (-1.0 / alpha)  # underflows to 0 instead of overflowing for tiny alpha
    if p <= t / (1 + t):
        k_over_p = d ** (2.0 / alpha) / (d * (1 - p))
        k = k_over_p * p
        x = (1 - p - p * d * k) / (k + d)
        # (1 - p - d x) / p, rewritten to avoid cancellation and underflow
        rest_over_p = k_over_p * (1 - p + p * d * d) / (k + d)
        inner = (d * (1 - p)) ** alpha * (p * d + x) ** (1 - alpha) / d + p * rest_over_p ** (1 - alpha)
        regime = "p <= 1/(d^(1/alpha)+1)"
    else:
        inner = (1 - p) ** alpha * p ** (1 - alpha) + p**alpha * (1 - p) ** (1 - alpha)
        regime = "1/(d^(1/alpha)+1) < p <= 1/2"
    return OracleValue(0.5 * math.log2(inner) / (alpha - 1), regime, False)


def depolarizing_fidelity_hi(d: int, f: float) -> float:
    return (2 * f - 1) / d**2 + 2 * math.sqrt(max((d * d - 1) * (1 - f) * f, 0.0)) / d**2 - f + 1


def depolarizing_bs(d: int, p: float, fprime: str = "min") -> OracleValue:
    """Exact value at alpha = 1 for the depolarizing channel.

    ``fprime="min"`` uses F' = min{F'_hi, F}, which gives log2 d at p = 0;
    ``fprime="max"`` keeps the other selection for comparison.
    """
    d = _d(d)
    p = _p(p, d * d / (d * d - 1))
    if fprime not in ("min", "max"):
        raise ValueError("fprime must be 'min' or 'max'")
    f = 1 - p + p / d**2
    if fprime == "min" and p >= d / (2 * (d + 1)):
        return OracleValue(0.0, "p >= d/(2(d+1))", True)
    f_hi = depolarizing_fidelity_hi(d, f)
    fp = min(f_hi, f) if fprime == "min" else max(f_hi, f)
    val = 0.5 * (_xlogx_ratio(f, fp) + _xlogx_ratio(1 - f, 1 - fp))
    return OracleValue(max(val, 0.0), "p < d/(2(d+1))", True)


def semicausal_erasure_bs(d: int, p: float) -> OracleValue:
    return OracleValue((1 - _p(p)) * math.log2(_d(d)), "all p", True)


def full_rank_min_geo(n: ChoiChannel | BipartiteChannel, rank_tol: float = RANK_TOL) -> OracleValue:
    """Zero for channels whose Choi operator has full rank."""
    choi = n.choi
    v, _ = support_basis(choi, rank_tol)
    if v.shape[1] < choi.shape[0]:
        raise NotApplicable(f"Choi operator has rank {v.shape[1]} < {choi.shape[0]}")
    return OracleValue(0.0, "full rank", True)
