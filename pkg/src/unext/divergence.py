"""Closed-form geometric Renyi divergences of states and channels (base 2).

Infinite divergences are returned as ``math.inf`` inside a ``DivergenceValue``
rather than raised, so callers that minimize over candidates can skip them.
Channel divergences for alpha in (1, 2] have no closed form here; they come
from the SDP in ``unext.sdp``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .linalg import (
    RANK_TOL,
    hermitize,
    support_basis,
    support_contained,
)
from .quantum import BipartiteChannel, ChoiChannel


@dataclass(frozen=True)
class DivergenceValue:
    value: float
    alpha: float
    support_condition_met: bool = True

    def __float__(self) -> float:
        return float(self.value)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)


def _complement(v0: np.ndarray) -> np.ndarray:
    n = v0.shape[0]
    if v0.shape[1] == 0:
        return np.eye(n, dtype=complex)
    q, _ = np.linalg.qr(np.hstack([v0, np.eye(n, dtype=complex)]))
    return q[:, v0.shape[1] : n]


def _psd_parts(w, v, p, rank_tol: float = RANK_TOL):
    """Power p on the eigenvalues above rank_tol times the largest; the rest count as zero."""
    top = float(np.max(w)) if w.size else 0.0
    keep = w > rank_tol * top if top > 0 else np.zeros(w.shape, bool)
    return (v[:, keep] * w[keep] ** p) @ v[:, keep].conj().T


def _pinv_psd(m: np.ndarray, rank_tol: float, scale: float) -> np.ndarray:
    """Pseudo-inverse with eigenvalues below rank_tol * scale treated as zero."""
    if m.size == 0:
        return m
    w, v = np.linalg.eigh(hermitize(m))
    keep = w > rank_tol * scale
    return (v[:, keep] / w[keep]) @ v[:, keep].conj().T


def projected_pair(omega: np.ndarray, tau: np.ndarray, rank_tol: float = RANK_TOL):
    """Block data on supp(tau): isometry V0, tau_0 and the Schur complement omega~.

    omega~ = omega_00 - omega_01 omega_11^{-1} omega_01^dagger with blocks taken
    with respect to supp(tau) and its complement.
    """
    omega = hermitize(omega)
    tau = hermitize(tau)
    v0, w0 = support_basis(tau, rank_tol)
    v1 = _complement(v0)
    o00 = v0.conj().T @ omega @ v0
    o01 = v0.conj().T @ omega @ v1
    o11 = v1.conj().T @ omega @ v1
    scale = float(np.max(np.abs(omega))) if omega.size else 0.0
    tilde = o00 - o01 @ _pinv_psd(o11, rank_tol, scale) @ o01.conj().T if v1.shape[1] else o00
    return v0, np.diag(w0).astype(complex), hermitize(tilde)


def _range(z: np.ndarray, rank_tol: float) -> np.ndarray:
    """Eigenvectors of z with eigenvalue above rank_tol times the largest; no sign check."""
    w, v = np.linalg.eigh(z)
    top = float(np.max(np.abs(w))) if w.size else 0.0
    return v[:, w > rank_tol * top] if top > 0 else v[:, :0]


def _zeta(tau0: np.ndarray, tilde: np.ndarray) -> np.ndarray:
    w = np.real(np.diag(tau0))
    s = 1.0 / np.sqrt(w)
    return hermitize(s[:, None] * tilde * s[None, :])


def geo_quasi_entropy_state(omega, tau, alpha: float, rank_tol: float = RANK_TOL) -> float:
    """Q_alpha for alpha in (0,1) or (1,2]; +inf when alpha > 1 and supports do not nest."""
    if not (0 < alpha < 1 or 1 < alpha <= 2):
        raise ValueError("alpha must lie in (0,1) or (1,2]")
    omega = hermitize(omega)
    tau = hermitize(tau)
    if alpha > 1:
        if not support_contained(omega, tau, rank_tol):
            return math.inf
        v0, w0 = support_basis(tau, rank_tol)
        s = 1.0 / np.sqrt(w0)
        inner = hermitize(s[:, None] * (v0.conj().T @ omega @ v0) * s[None, :])
        wi, vi = np.linalg.eigh(inner)
        wi = np.clip(wi, 0.0, None)
        # Tr[tau0 (inner)^alpha] with tau0 = diag(w0)
        pw = (vi * wi**alpha) @ vi.conj().T
        return float(np.real(np.sum(w0 * np.diag(pw))))
    v0, tau0, tilde = projected_pair(omega, tau, rank_tol)
    if v0.shape[1] == 0:
        return 0.0
    wi, vi = np.linalg.eigh(_zeta(tau0, tilde))
    pw = _psd_parts(wi, vi, alpha, rank_tol)
    return float(np.real(np.sum(np.real(np.diag(tau0)) * np.diag(pw))))


def bs_entropy_state(omega, tau, rank_tol: float = RANK_TOL) -> DivergenceValue:
    """Tr[omega log2(omega^{1/2} tau^{-1} omega^{1/2})]."""
    omega = hermitize(omega)
    tau = hermitize(tau)
    if not support_contained(omega, tau, rank_tol):
        return DivergenceValue(math.inf, 1.0, False)
    vt, wt = support_basis(tau, rank_tol)
    tinv = (vt / wt) @ vt.conj().T
    vo, wo = support_basis(omega, rank_tol)
    half = (vo * np.sqrt(wo)) @ vo.conj().T
    q = hermitize(half @ tinv @ half)
    vq, wq = support_basis(q, rank_tol)
    logq = (vq * np.log2(wq)) @ vq.conj().T
    return DivergenceValue(float(np.real(np.trace(omega @ logq))), 1.0, True)


def geo_entropy_state(omega, tau, alpha: float, rank_tol: float = RANK_TOL) -> DivergenceValue:
    if alpha == 1:
        return bs_entropy_state(omega, tau, rank_tol)
    q = geo_quasi_entropy_state(omega, tau, alpha, rank_tol)
    if math.isinf(q):
        return DivergenceValue(math.inf, alpha, False)
    if q <= 0:
        return DivergenceValue(math.inf, alpha, True)
    return DivergenceValue(math.log2(q) / (alpha - 1), alpha, True)


def min_geo_entropy_state(omega, tau, rank_tol: float = RANK_TOL) -> DivergenceValue:
    """-log2 Tr[tau Pi_zeta] with zeta = tau^{-1/2} omega~ tau^{-1/2}."""
    v0, tau0, tilde = projected_pair(omega, tau, rank_tol)
    if v0.shape[1] == 0:
        return DivergenceValue(math.inf, 0.0, False)
    vz = _range(_zeta(tau0, tilde), rank_tol)
    t = float(np.real(np.trace(vz.conj().T @ tau0 @ vz)))
    if t <= 0:
        return DivergenceValue(math.inf, 0.0, True)
    return DivergenceValue(-math.log2(t), 0.0, True)


# --- channels ----------------------------------------------------------------------------


def _choi_pair(n, m) -> tuple[np.ndarray, np.ndarray, int, int]:
    if isinstance(n, BipartiteChannel):
        n = n.channel
    if isinstance(m, BipartiteChannel):
        m = m.channel
    if (n.d_in, n.d_out) != (m.d_in, m.d_out):
        raise ShapeMismatch("channels have different input/output dimensions")
    return n.canonical(), m.canonical(), n.d_in, n.d_out


def _trace_out(x: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    return np.einsum("ibjb->ij", x.reshape(d_in, d_out, d_in, d_out))


def _channel_sandwich(gn, gm, d_in, d_out, power_fn, rank_tol):
    """Tr_B[Gamma^M^{1/2} f(zeta) Gamma^M^{1/2}] assembled on supp(Gamma^M)."""
    v0, tau0, tilde = projected_pair(gn, gm, rank_tol)
    w0 = np.real(np.diag(tau0))
    wi, vi = np.linalg.eigh(_zeta(tau0, tilde))
    mid = power_fn(wi, vi)
    s = np.sqrt(w0)
    inner = s[:, None] * mid * s[None, :]
    full = v0 @ inner @ v0.conj().T
    return hermitize(_trace_out(full, d_in, d_out))


def geo_entropy_channel_sub1(n: ChoiChannel, m: ChoiChannel, alpha: float, rank_tol: float = RANK_TOL) -> DivergenceValue:
    """(1/(alpha-1)) log2 lambda_min(Tr_B[G_alpha(Gamma^M, Gamma~^N)]) for alpha in (0,1)."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0,1)")
    gn, gm, di, do = _choi_pair(n, m)
    t = _channel_sandwich(gn, gm, di, do, lambda w, v: _psd_parts(w, v, alpha, rank_tol), rank_tol)
    lam = float(np.linalg.eigvalsh(t)[0])
    if lam <= 0:
        return DivergenceValue(math.inf, alpha, True)
    return DivergenceValue(math.log2(lam) / (alpha - 1), alpha, True)


def min_geo_entropy_channel(n: ChoiChannel, m: ChoiChannel, rank_tol: float = RANK_TOL) -> DivergenceValue:
    """-log2 lambda_min(Tr_B[(Gamma^M)^{1/2} Pi_zeta (Gamma^M)^{1/2}])."""
    gn, gm, di, do = _choi_pair(n, m)

    def projector(w, v):
        top = float(np.max(np.abs(w))) if w.size else 0.0
        keep = w > rank_tol * top if top > 0 else np.zeros(w.shape, bool)
        return v[:, keep] @ v[:, keep].conj().T

    t = _channel_sandwich(gn, gm, di, do, projector, rank_tol)
    lam = float(np.linalg.eigvalsh(t)[0])
    if lam <= 0:
        return DivergenceValue(math.inf, 0.0, True)
    return DivergenceValue(-math.log2(lam), 0.0, True)


def bs_entropy_channel(n: ChoiChannel, m: ChoiChannel, rank_tol: float = RANK_TOL) -> DivergenceValue:
    """lambda_max(Tr_B[N^{1/2} log2(N^{1/2} M^{-1} N^{1/2}) N^{1/2}]) with N, M the Choi operators.

    The operator inside is PSD for channel pairs, so lambda_max equals its
    operator norm.
    """
    gn, gm, di, do = _choi_pair(n, m)
    if not support_contained(gn, gm, rank_tol):
        return DivergenceValue(math.inf, 1.0, False)
    vm, wm = support_basis(gm, rank_tol)
    minv = (vm / wm) @ vm.conj().T
    vn, wn = support_basis(gn, rank_tol)
    half = (vn * np.sqrt(wn)) @ vn.conj().T
    q = hermitize(half @ minv @ half)
    vq, wq = support_basis(q, rank_tol)
    logq = (vq * np.log2(wq)) @ vq.conj().T
    t = hermitize(_trace_out(half @ logq @ half, di, do))
    return DivergenceValue(float(np.linalg.eigvalsh(t)[-1]), 1.0, True)
