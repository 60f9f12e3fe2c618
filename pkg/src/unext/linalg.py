"""Dense Hermitian linear algebra on labelled tensor-product spaces.

Everything here is a pure function of numpy arrays.  ``HermitianMatrix`` is a
validated carrier; the operations accept either it or a plain ndarray and
return plain ndarrays.  Supports are decided by a relative eigenvalue
threshold ``rank_tol * lambda_max``.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InvalidPermutation,
    NegativeOperator,
    NonHermitian,
    ShapeMismatch,
    SupportViolation,
)

RANK_TOL = 1e-9
HERM_TOL = 1e-10


def hermitize(m) -> np.ndarray:
    """Return (m + m^dagger)/2 as a complex array."""
    a = np.asarray(m, dtype=complex)
    return 0.5 * (a + a.conj().T)


@dataclass(frozen=True)
class HermitianMatrix:
    """Square complex matrix that is Hermitian up to ``herm_tol``.

    The stored entries are symmetrized on construction.
    """

    entries: np.ndarray
    herm_tol: float = HERM_TOL

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeMismatch(f"expected a square matrix, got shape {a.shape}")
        dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
        if dev > self.herm_tol:
            raise NonHermitian(f"max |m - m^dagger| = {dev:.3e} exceeds {self.herm_tol:.1e}")
        sym = 0.5 * (a + a.conj().T)
        sym.setflags(write=False)
        object.__setattr__(self, "entries", sym)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def _as_matrix(m, check: bool = True, herm_tol: float = HERM_TOL) -> np.ndarray:
    if isinstance(m, HermitianMatrix):
        return m.entries
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {a.shape}")
    if check:
        scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
        dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
        if dev > herm_tol * scale:
            raise NonHermitian(f"max |m - m^dagger| = {dev:.3e}")
    return 0.5 * (a + a.conj().T)


@dataclass(frozen=True)
class SubsystemShape:
    """Ordered factorization of a Hilbert space into labelled subsystems."""

    dims: tuple[int, ...]
    labels: tuple[str, ...]

    def __init__(self, dims: Sequence[int], labels: Sequence[str]):
        dims = tuple(int(d) for d in dims)
        labels = tuple(str(s) for s in labels)
        if len(dims) != len(labels):
            raise ShapeMismatch("dims and labels differ in length")
        if any(d < 1 for d in dims):
            raise ShapeMismatch(f"dimensions must be positive, got {dims}")
        if len(set(labels)) != len(labels):
            raise ShapeMismatch(f"labels must be unique, got {labels}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @property
    def total(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ShapeMismatch(f"unknown label {label!r} in {self.labels}") from None

    def dim(self, label: str) -> int:
        return self.dims[self.index(label)]

    def dim_of(self, labels: Iterable[str]) -> int:
        return int(np.prod([self.dim(s) for s in labels], dtype=np.int64))

    def sub(self, labels: Iterable[str]) -> "SubsystemShape":
        """Shape restricted to ``labels``, kept in this shape's order."""
        keep = set(labels)
        for s in keep:
            self.index(s)
        pairs = [(d, s) for d, s in zip(self.dims, self.labels) if s in keep]
        return SubsystemShape([d for d, _ in pairs], [s for _, s in pairs])

    def reordered(self, labels: Sequence[str]) -> "SubsystemShape":
        return SubsystemShape([self.dim(s) for s in labels], labels)

    def relabel(self, mapping: dict) -> "SubsystemShape":
        return SubsystemShape(self.dims, [mapping.get(s, s) for s in self.labels])

    def __add__(self, other: "SubsystemShape") -> "SubsystemShape":
        return SubsystemShape(self.dims + other.dims, self.labels + other.labels)


def _check_shape(a: np.ndarray, shape: SubsystemShape) -> None:
    if a.shape[0] != shape.total:
        raise ShapeMismatch(f"matrix dim {a.shape[0]} != product of dims {shape.dims}")


def herm_eig(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and the matching unitary."""
    a = _as_matrix(m)
    w, v = np.linalg.eigh(a)
    return w[::-1].copy(), v[:, ::-1].copy()


def _threshold(w: np.ndarray, rank_tol: float) -> float:
    top = float(np.max(np.abs(w))) if w.size else 0.0
    return rank_tol * top


def support_basis(m, rank_tol: float = RANK_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Isometry onto the support of a PSD matrix and the retained eigenvalues."""
    w, v = herm_eig(_as_matrix(m, check=False))
    thr = _threshold(w, rank_tol)
    if w.size and w[-1] < -thr:
        raise NegativeOperator(f"min eigenvalue {w[-1]:.3e} below -{thr:.1e}")
    mask = w > thr
    return v[:, mask], w[mask]


def support_projector(m, rank_tol: float = RANK_TOL) -> np.ndarray:
    v, _ = support_basis(m, rank_tol)
    return v @ v.conj().T


def mat_power_on_support(m, p: float, rank_tol: float = RANK_TOL) -> np.ndarray:
    """m^p with the power applied only to eigenvalues above threshold."""
    v, w = support_basis(m, rank_tol)
    return (v * w**p) @ v.conj().T


def mat_log2_on_support(m, rank_tol: float = RANK_TOL) -> np.ndarray:
    v, w = support_basis(m, rank_tol)
    return (v * np.log2(w)) @ v.conj().T


def mat_fn(m, fn) -> np.ndarray:
    """Apply a scalar function to the spectrum of a Hermitian matrix."""
    w, v = np.linalg.eigh(_as_matrix(m, check=False))
    return (v * fn(w)) @ v.conj().T


def support_contained(y, x, rank_tol: float = RANK_TOL, tol: float = 1e-8) -> bool:
    """True when supp(y) lies inside supp(x)."""
    y = _as_matrix(y, check=False)
    vx, _ = support_basis(x, rank_tol)
    leak = y - vx @ (vx.conj().T @ y @ vx) @ vx.conj().T
    scale = max(1.0, float(np.linalg.norm(y, 2))) if y.size else 1.0
    return float(np.linalg.norm(leak, 2)) <= tol * scale


def weighted_geometric_mean(x, y, alpha: float, rank_tol: float = RANK_TOL) -> np.ndarray:
    """G_alpha(x, y) = x^{1/2} (x^{-1/2} y x^{-1/2})^alpha x^{1/2}, powers on support."""
    x = _as_matrix(x)
    y = _as_matrix(y)
    if x.shape != y.shape:
        raise ShapeMismatch("x and y differ in shape")
    if not 0.0 <= alpha <= 1.0 and not support_contained(y, x, rank_tol):
        raise SupportViolation("supp(y) not contained in supp(x)")
    v, w = support_basis(x, rank_tol)
    xs = (v * np.sqrt(w)) @ v.conj().T
    xis = (v / np.sqrt(w)) @ v.conj().T
    inner = hermitize(xis @ y @ xis)
    # restrict to supp(x) so that alpha < 0 or 0 stays inside it
    inner_r = hermitize(v.conj().T @ inner @ v)
    wi, vi = np.linalg.eigh(inner_r)
    wi = np.clip(wi, 0.0, None)
    if alpha == 0:
        pw = np.eye(len(wi))
    else:
        pw = (vi * wi**alpha) @ vi.conj().T
    mid = v @ pw @ v.conj().T
    return hermitize(xs @ mid @ xs)


def _letters(n: int) -> list[str]:
    pool = string.ascii_letters
    if 2 * n > len(pool):
        raise ShapeMismatch("too many subsystems for index bookkeeping")
    return list(pool[: 2 * n])


def partial_trace(m, shape: SubsystemShape, keep: Iterable[str]) -> np.ndarray:
    """Trace out every subsystem not in ``keep``; kept systems stay in order."""
    a = np.asarray(m, dtype=complex) if not isinstance(m, HermitianMatrix) else m.entries
    _check_shape(a, shape)
    keep = set(keep)
    for s in keep:
        shape.index(s)
    n = len(shape.dims)
    idx = _letters(n)
    row, col = idx[:n], idx[n:]
    col = [row[i] if shape.labels[i] not in keep else col[i] for i in range(n)]
    out_r = [row[i] for i in range(n) if shape.labels[i] in keep]
    out_c = [col[i] for i in range(n) if shape.labels[i] in keep]
    t = a.reshape(shape.dims + shape.dims)
    res = np.einsum("".join(row + col) + "->" + "".join(out_r + out_c), t)
    dk = shape.dim_of(keep)
    return res.reshape(dk, dk)


def partial_transpose(m, shape: SubsystemShape, on: Iterable[str]) -> np.ndarray:
    a = np.asarray(m, dtype=complex) if not isinstance(m, HermitianMatrix) else m.entries
    _check_shape(a, shape)
    n = len(shape.dims)
    axes = list(range(2 * n))
    for s in on:
        i = shape.index(s)
        axes[i], axes[n + i] = axes[n + i], axes[i]
    t = a.reshape(shape.dims + shape.dims).transpose(axes)
    return t.reshape(a.shape)


def permute_systems(m, shape: SubsystemShape, order: Sequence[str]) -> np.ndarray:
    """Reorder tensor factors so that they appear in ``order``."""
    a = np.asarray(m, dtype=complex) if not isinstance(m, HermitianMatrix) else m.entries
    _check_shape(a, shape)
    if sorted(order) != sorted(shape.labels):
        raise ShapeMismatch(f"order {order} is not a permutation of {shape.labels}")
    n = len(shape.dims)
    perm = [shape.index(s) for s in order]
    t = a.reshape(shape.dims + shape.dims).transpose(perm + [n + p for p in perm])
    return t.reshape(a.shape)


def permute_vector(v, shape: SubsystemShape, order: Sequence[str]) -> np.ndarray:
    perm = [shape.index(s) for s in order]
    return np.asarray(v).reshape(shape.dims).transpose(perm).reshape(-1)


def kron(*ms) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in ms:
        out = np.kron(out, np.asarray(m))
    return out


def tensor_labelled(parts: Sequence[tuple[np.ndarray, SubsystemShape]], order: Sequence[str]) -> np.ndarray:
    """Tensor labelled operators together and reorder the result to ``order``."""
    mats = [p[0] for p in parts]
    shape = parts[0][1]
    for _, s in parts[1:]:
        shape = shape + s
    return permute_systems(kron(*mats), shape, order)


def permutation_unitary(k: int, subsystem_dim: int, pi: Sequence[int]) -> np.ndarray:
    """W^pi sending the content of slot j to slot pi[j] (0-based).

    Composition follows W^pi W^sigma = W^(pi o sigma).
    """
    pi = [int(x) for x in pi]
    if sorted(pi) != list(range(k)):
        raise InvalidPermutation(f"{pi} is not a permutation of range({k})")
    d = int(subsystem_dim)
    inv = np.argsort(pi)
    n = d**k
    idx = np.arange(n).reshape((d,) * k)
    # output slot s carries input slot inv[s]
    src = idx.transpose(inv).reshape(-1)
    w = np.zeros((n, n))
    w[np.arange(n), src] = 1.0
    return w


def basis_ket(i: int, d: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[i] = 1.0
    return v


def proj(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    r = d if rank is None else rank
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    rho = g @ g.conj().T
    return hermitize(rho / np.trace(rho).real)


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return hermitize(g)
