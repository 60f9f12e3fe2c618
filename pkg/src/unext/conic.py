"""Solver-agnostic conic programs over Hermitian matrix variables.

A ``ConicProblem`` declares Hermitian block variables, affine Hermitian
expressions that must vanish or be PSD, and a real linear objective to
minimize.  Each Hermitian n x n variable is parameterized by n^2 real numbers
(diagonal, then real and imaginary parts of the strict upper triangle), so
every affine expression is stored as a complex sparse matrix acting on a real
parameter vector.  Conjugation and transposition then stay linear.

``real_embed`` turns the problem into a real symmetric cone program through
H -> [[Re H, -Im H], [Im H, Re H]], and ``solve`` hands that to a backend that
implements the ``SolverBackend`` protocol.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ProblemTooLarge, ShapeMismatch, SolverFailure
from .linalg import SubsystemShape

DEFAULT_TOL = 1e-8
MAX_PSD_ROWS = 4096


def default_tol() -> float:
    env = os.environ.get("UNEXT_SOLVER_TOL")
    return float(env) if env else DEFAULT_TOL


# --- variable parameterization -----------------------------------------------


def herm_param_matrix(n: int) -> sp.csr_matrix:
    """Complex matrix P with vec(X) = P x for the real parameters x of X."""
    rows, cols, vals = [], [], []
    k = 0
    for i in range(n):
        rows.append(i * n + i)
        cols.append(k)
        vals.append(1.0)
        k += 1
    for i in range(n):
        for j in range(i + 1, n):
            # real part
            rows += [i * n + j, j * n + i]
            cols += [k, k]
            vals += [1.0, 1.0]
            k += 1
            # imaginary part
            rows += [i * n + j, j * n + i]
            cols += [k, k]
            vals += [1j, -1j]
            k += 1
    return sp.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(n * n, n * n))


def herm_to_params(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    out = [x[i, i].real for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            out += [x[i, j].real, x[i, j].imag]
    return np.array(out)


# --- affine expressions ------------------------------------------------------------


@dataclass
class Affine:
    """Affine matrix-valued expression sum_v coef[v] @ x_v + const, shape rows x cols."""

    rows: int
    cols: int
    coef: dict = field(default_factory=dict)
    const: np.ndarray | None = None

    def __post_init__(self):
        if self.const is None:
            self.const = np.zeros((self.rows, self.cols), dtype=complex)
        self.const = np.asarray(self.const, dtype=complex)
        if self.const.shape != (self.rows, self.cols):
            raise ShapeMismatch(f"constant has shape {self.const.shape}, expected {(self.rows, self.cols)}")

    @staticmethod
    def constant(m) -> "Affine":
        m = np.atleast_2d(np.asarray(m, dtype=complex))
        return Affine(m.shape[0], m.shape[1], {}, m)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def _combine(self, other: "Affine", sign: float) -> "Affine":
        if isinstance(other, (np.ndarray, int, float, complex)):
            other = Affine.constant(np.broadcast_to(other, self.shape))
        if other.shape != self.shape:
            raise ShapeMismatch(f"cannot add shapes {self.shape} and {other.shape}")
        coef = dict(self.coef)
        for v, c in other.coef.items():
            coef[v] = coef[v] + sign * c if v in coef else sign * c
        return Affine(self.rows, self.cols, coef, self.const + sign * other.const)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, s):
        return Affine(self.rows, self.cols, {v: c * s for v, c in self.coef.items()}, self.const * s)

    __rmul__ = __mul__

    def linear_map(self, f: sp.spmatrix, rows: int, cols: int) -> "Affine":
        """Apply a linear map given by its matrix on row-major vectorizations."""
        f = sp.csr_matrix(f)
        coef = {v: sp.csr_matrix(f @ c) for v, c in self.coef.items()}
        const = (f @ self.const.reshape(-1)).reshape(rows, cols)
        return Affine(rows, cols, coef, const)

    def sandwich(self, left: np.ndarray, right: np.ndarray) -> "Affine":
        """left @ self @ right."""
        left = np.asarray(left, dtype=complex)
        right = np.asarray(right, dtype=complex)
        f = sp.kron(sp.csr_matrix(left), sp.csr_matrix(right.T))
        return self.linear_map(f, left.shape[0], right.shape[1])

    def adjoint(self) -> "Affine":
        f = _transpose_map(self.rows, self.cols)
        coef = {v: sp.csr_matrix(f @ c).conj() for v, c in self.coef.items()}
        return Affine(self.cols, self.rows, coef, self.const.conj().T)

    def value(self, params: dict) -> np.ndarray:
        out = self.const.reshape(-1).copy()
        for v, c in self.coef.items():
            out = out + c @ params[v]
        return out.reshape(self.rows, self.cols)

    def variables(self) -> set:
        return set(self.coef)

    # labelled tensor operations, all on square expressions
    def ptrace(self, shape: SubsystemShape, keep) -> "Affine":
        f, dk = partial_trace_map(shape, keep)
        return self.linear_map(f, dk, dk)

    def permute(self, shape: SubsystemShape, order) -> "Affine":
        f = permute_map(shape, order)
        return self.linear_map(f, self.rows, self.cols)

    def kron_identity(self, k: int) -> "Affine":
        """self x I_k (identity appended as the last factor)."""
        f = kron_identity_map(self.rows, k)
        return self.linear_map(f, self.rows * k, self.cols * k)


def _transpose_map(rows: int, cols: int) -> sp.csr_matrix:
    idx = np.arange(rows * cols).reshape(rows, cols)
    src = idx.T.reshape(-1)
    n = rows * cols
    return sp.csr_matrix((np.ones(n), (np.arange(n), src)), shape=(n, n))


def partial_trace_map(shape: SubsystemShape, keep) -> tuple[sp.csr_matrix, int]:
    keep = set(keep)
    n = shape.total
    dims = shape.dims
    k = len(dims)
    mask = np.array([lab in keep for lab in shape.labels])
    multi = np.indices(dims).reshape(k, -1).T  # row index -> multi index
    kdims = [d for d, m in zip(dims, mask) if m]
    dk = int(np.prod(kdims, dtype=np.int64)) if kdims else 1
    if kdims:
        kflat = np.ravel_multi_index(multi[:, mask].T, kdims)
    else:
        kflat = np.zeros(n, dtype=np.int64)
    tflat = np.ravel_multi_index(multi[:, ~mask].T, [d for d, m in zip(dims, mask) if not m]) if (~mask).any() else np.zeros(n, dtype=np.int64)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i = i.reshape(-1)
    j = j.reshape(-1)
    sel = tflat[i] == tflat[j]
    src = (i * n + j)[sel]
    dst = kflat[i[sel]] * dk + kflat[j[sel]]
    return sp.csr_matrix((np.ones(src.size), (dst, src)), shape=(dk * dk, n * n)), dk


def permute_map(shape: SubsystemShape, order) -> sp.csr_matrix:
    n = shape.total
    perm = [shape.index(s) for s in order]
    idx = np.arange(n).reshape(shape.dims).transpose(perm).reshape(-1)  # new row r <- old row idx[r]
    src = (idx[:, None] * n + idx[None, :]).reshape(-1)
    m = n * n
    return sp.csr_matrix((np.ones(m), (np.arange(m), src)), shape=(m, m))


def kron_identity_map(n: int, k: int) -> sp.csr_matrix:
    i, j, a = np.meshgrid(np.arange(n), np.arange(n), np.arange(k), indexing="ij")
    i, j, a = i.reshape(-1), j.reshape(-1), a.reshape(-1)
    dst = (i * k + a) * (n * k) + (j * k + a)
    src = i * n + j
    return sp.csr_matrix((np.ones(src.size), (dst, src)), shape=((n * k) ** 2, n * n))


def block(blocks: list[list[Affine | None]]) -> Affine:
    """Assemble a block matrix; ``None`` entries are zero blocks."""
    nr = len(blocks)
    nc = len(blocks[0])
    heights = [next(b.rows for b in row if b is not None) for row in blocks]
    widths = [next(blocks[r][c].cols for r in range(nr) if blocks[r][c] is not None) for c in range(nc)]
    R, C = sum(heights), sum(widths)
    out = Affine(R, C)
    r0 = 0
    for r in range(nr):
        c0 = 0
        for c in range(nc):
            b = blocks[r][c]
            if b is not None:
                if b.shape != (heights[r], widths[c]):
                    raise ShapeMismatch("inconsistent block sizes")
                out = out + _place(b, r0, c0, R, C)
            c0 += widths[c]
        r0 += heights[r]
    return out


def _place(b: Affine, r0: int, c0: int, R: int, C: int) -> Affine:
    i, j = np.meshgrid(np.arange(b.rows), np.arange(b.cols), indexing="ij")
    src = (i * b.cols + j).reshape(-1)
    dst = ((i + r0) * C + (j + c0)).reshape(-1)
    f = sp.csr_matrix((np.ones(src.size), (dst, src)), shape=(R * C, b.rows * b.cols))
    return b.linear_map(f, R, C)


# --- problem ---------------------------------------------------------------------------


@dataclass
class ConicProblem:
    """minimize objective subject to equalities == 0 and psd_blocks >= 0."""

    variables: dict = field(default_factory=dict)  # name -> Hermitian dim
    equalities: list = field(default_factory=list)  # (name, Affine)
    psd_blocks: list = field(default_factory=list)  # (name, Affine)
    objective: dict = field(default_factory=dict)  # var -> real coefficient vector on params
    objective_const: float = 0.0

    def var(self, name: str, n: int) -> Affine:
        if name in self.variables:
            raise ShapeMismatch(f"variable {name!r} declared twice")
        self.variables[name] = int(n)
        return Affine(n, n, {name: herm_param_matrix(n)})

    def scalar(self, name: str) -> Affine:
        return self.var(name, 1)

    def add_eq(self, name: str, expr: Affine) -> None:
        self._check(expr)
        self.equalities.append((name, expr))

    def add_psd(self, name: str, expr: Affine) -> None:
        self._check(expr)
        if expr.rows != expr.cols:
            raise ShapeMismatch(f"PSD block {name!r} is not square")
        self.psd_blocks.append((name, expr))

    def minimize(self, expr: Affine) -> None:
        """Objective Re(expr) for a 1 x 1 expression."""
        if expr.shape != (1, 1):
            raise ShapeMismatch("objective must be a scalar expression")
        self._check(expr)
        self.objective = {v: np.asarray(c.toarray()).reshape(-1).real for v, c in expr.coef.items()}
        self.objective_const = float(expr.const.real[0, 0])

    def _check(self, expr: Affine) -> None:
        for v, c in expr.coef.items():
            if v not in self.variables:
                raise ShapeMismatch(f"undeclared variable {v!r}")
            n = self.variables[v]
            if c.shape != (expr.rows * expr.cols, n * n):
                raise ShapeMismatch(f"coefficient of {v!r} has shape {c.shape}")

    def to_json(self) -> str:
        """Serialize to JSON: COO triplets with real and imaginary parts."""

        def trip(expr: Affine) -> dict:
            terms = {}
            for v, c in expr.coef.items():
                c = sp.coo_matrix(c)
                terms[v] = {"row": c.row.tolist(), "col": c.col.tolist(),
                            "re": c.data.real.tolist(), "im": c.data.imag.tolist()}
            return {"rows": expr.rows, "cols": expr.cols, "terms": terms,
                    "const_re": expr.const.real.tolist(), "const_im": expr.const.imag.tolist()}

        doc = {
            "format": "unext-conic-v1",
            "parameterization": "hermitian n x n -> n^2 reals: diagonal, then (re, im) of strict upper triangle row by row",
            "variables": [{"name": k, "dim": v} for k, v in self.variables.items()],
            "equalities": [{"name": n, **trip(e)} for n, e in self.equalities],
            "psd_blocks": [{"name": n, **trip(e)} for n, e in self.psd_blocks],
            "objective": {k: v.tolist() for k, v in self.objective.items()},
            "objective_const": self.objective_const,
            "sense": "minimize",
        }
        return json.dumps(doc)


# --- real embedding ------------------------------------------------------------------------


def embed_matrix(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    return np.block([[h.real, -h.imag], [h.imag, h.real]])


def extract_matrix(s: np.ndarray) -> np.ndarray:
    """Inverse of ``embed_matrix`` (averaging the redundant copies)."""
    m = s.shape[0] // 2
    re = 0.5 * (s[:m, :m] + s[m:, m:])
    im = 0.5 * (s[m:, :m] - s[:m, m:])
    return re + 1j * im


@dataclass
class RealConicProblem:
    """minimize c.x + c0 s.t. A_eq x = b_eq and svec(G_k x + h_k) in PSD_k."""

    c: np.ndarray
    c0: float
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    psd: list  # (name, size, G (svec rows x N), h)
    offsets: dict  # variable -> (start, length)
    dims: dict  # variable -> Hermitian dim

    @property
    def n(self) -> int:
        return self.c.size

    def unpack(self, x: np.ndarray) -> dict:
        out = {}
        for v, (s, k) in self.offsets.items():
            n = self.dims[v]
            out[v] = (herm_param_matrix(n) @ x[s : s + k]).reshape(n, n)
        return out


def _svec_indices(size: int) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangle (i <= j) indices in column-major order."""
    ii, jj = [], []
    for j in range(size):
        for i in range(j + 1):
            ii.append(i)
            jj.append(j)
    return np.array(ii), np.array(jj)


def _stack(expr: Affine, offsets: dict, n: int) -> tuple[sp.csr_matrix, np.ndarray]:
    """Complex matrix acting on the full real parameter vector, plus constant."""
    mats = []
    cols = []
    for v, c in expr.coef.items():
        s, k = offsets[v]
        c = sp.coo_matrix(c)
        mats.append((c.row, c.col + s, c.data))
    if mats:
        r = np.concatenate([m[0] for m in mats])
        cc = np.concatenate([m[1] for m in mats])
        d = np.concatenate([m[2] for m in mats])
        full = sp.csr_matrix((d, (r, cc)), shape=(expr.rows * expr.cols, n))
    else:
        full = sp.csr_matrix((expr.rows * expr.cols, n), dtype=complex)
    return full, expr.const.reshape(-1)


def real_embed(problem: ConicProblem) -> RealConicProblem:
    offsets, dims = {}, {}
    pos = 0
    for v, n in problem.variables.items():
        offsets[v] = (pos, n * n)
        dims[v] = n
        pos += n * n
    N = pos
    c = np.zeros(N)
    for v, vec in problem.objective.items():
        s, k = offsets[v]
        c[s : s + k] = vec

    eq_rows, eq_b = [], []
    for _, expr in problem.equalities:
        m = expr.rows
        full, const = _stack(expr, offsets, N)
        iu, ju = np.triu_indices(m)
        a = iu * m + ju
        b = ju * m + iu
        # Hermitian part of the expression, entry by entry
        coef = 0.5 * (full[a] + full[b].conj())
        cst = 0.5 * (const[a] + const[b].conj())
        eq_rows.append(sp.csr_matrix(coef.real))
        eq_b.append(-cst.real)
        off = iu < ju
        eq_rows.append(sp.csr_matrix(coef.imag)[np.flatnonzero(off)])
        eq_b.append(-cst.imag[off])
    if eq_rows:
        a_eq = sp.vstack(eq_rows).tocsr()
        b_eq = np.concatenate(eq_b)
    else:
        a_eq = sp.csr_matrix((0, N))
        b_eq = np.zeros(0)

    psd = []
    total_rows = 0
    for name, expr in problem.psd_blocks:
        m = expr.rows
        size = 2 * m
        total_rows += size
        full, const = _stack(expr, offsets, N)
        ii, jj = _svec_indices(size)
        a = (ii % m) * m + (jj % m)
        b = (jj % m) * m + (ii % m)
        coef = 0.5 * (full[a] + full[b].conj())
        cst = 0.5 * (const[a] + const[b].conj())
        top_right = (ii < m) & (jj >= m)
        sign = np.where(top_right, -1.0, 1.0)
        use_imag = top_right
        scale = np.where(ii == jj, 1.0, np.sqrt(2.0))
        g_re = sp.csr_matrix(coef.real)
        g_im = sp.csr_matrix(coef.imag)
        sel_re = sp.diags(np.where(use_imag, 0.0, scale))
        sel_im = sp.diags(np.where(use_imag, sign * scale, 0.0))
        g = (sel_re @ g_re + sel_im @ g_im).tocsr()
        h = np.where(use_imag, sign * scale * cst.imag, scale * cst.real)
        psd.append((name, size, g, h))
    if total_rows > MAX_PSD_ROWS:
        raise ProblemTooLarge(f"{total_rows} PSD rows after embedding exceeds cap {MAX_PSD_ROWS}")
    return RealConicProblem(c, problem.objective_const, a_eq, b_eq, psd, offsets, dims)


def _smat(v: np.ndarray, size: int) -> np.ndarray:
    ii, jj = _svec_indices(size)
    s = np.zeros((size, size))
    scale = np.where(ii == jj, 1.0, 1.0 / np.sqrt(2.0))
    s[ii, jj] = v * scale
    s[jj, ii] = v * scale
    return s


def prune_equalities(a_eq: sp.csr_matrix, b_eq: np.ndarray, tol: float = 1e-10):
    """Drop linearly dependent equality rows; flag inconsistent systems."""
    if a_eq.shape[0] == 0:
        return a_eq, b_eq, 0.0
    dense = a_eq.toarray()
    q, r, piv = sla.qr(dense.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > tol * max(1.0, diag[0] if diag.size else 1.0)))
    keep = np.sort(piv[:rank])
    a_k = a_eq[keep]
    b_k = b_eq[keep]
    # consistency of the dropped rows
    sol, *_ = np.linalg.lstsq(a_k.toarray(), b_k, rcond=None)
    incons = float(np.max(np.abs(dense @ sol - b_eq))) if b_eq.size else 0.0
    return a_k, b_k, incons


# --- solving -------------------------------------------------------------------------------


@dataclass
class SolveReport:
    status: str  # optimal | infeasible | unbounded | inaccurate | failed
    objective_value: float
    primal_residual: float
    dual_residual: float
    wall_time_ms: float
    backend: str = ""
    iterations: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class RealSolution:
    status: str
    x: np.ndarray | None
    objective: float
    dual_residual: float
    iterations: int = 0


class SolverBackend(Protocol):
    name: str

    def solve_real(self, prob: RealConicProblem, tol: float) -> RealSolution: ...


class ClarabelBackend:
    """Interior-point backend using the Clarabel solver."""

    name = "clarabel"

    def __init__(self, max_iter: int = 400, verbose: bool = False, static_reg: float = 1e-6):
        self.max_iter = max_iter
        self.verbose = verbose
        # the unextendibility chain is degenerate at value zero; the stock 1e-8
        # regularization stalls or fails there, 1e-6 converges cleanly
        self.static_reg = static_reg

    def solve_real(self, prob: RealConicProblem, tol: float) -> RealSolution:
        import clarabel

        N = prob.n
        blocks_a = [prob.a_eq]
        blocks_b = [prob.b_eq]
        cones = []
        if prob.a_eq.shape[0]:
            cones.append(clarabel.ZeroConeT(prob.a_eq.shape[0]))
        for _, size, g, h in prob.psd:
            blocks_a.append(-g)
            blocks_b.append(h)
            cones.append(clarabel.PSDTriangleConeT(size))
        A = sp.vstack(blocks_a).tocsc()
        b = np.concatenate(blocks_b)
        P = sp.csc_matrix((N, N))
        s = clarabel.DefaultSettings()
        s.verbose = self.verbose
        s.max_iter = self.max_iter
        s.tol_gap_abs = tol
        s.tol_gap_rel = tol
        s.tol_feas = 0.1 * tol
        s.static_regularization_constant = self.static_reg
        s.tol_infeas_abs = tol
        s.tol_infeas_rel = tol
        s.tol_ktratio = 1e-6
        sol = clarabel.DefaultSolver(P, prob.c, A, b, cones, s).solve()
        status = str(sol.status)
        mapping = {
            "Solved": "optimal",
            "AlmostSolved": "inaccurate",
            "PrimalInfeasible": "infeasible",
            "AlmostPrimalInfeasible": "infeasible",
            "DualInfeasible": "unbounded",
            "AlmostDualInfeasible": "unbounded",
        }
        st = mapping.get(status, "failed")
        x = np.asarray(sol.x) if st in ("optimal", "inaccurate") else None
        return RealSolution(st, x, float(sol.obj_val), float(sol.r_dual), int(sol.iterations))


_DEFAULT_BACKEND: SolverBackend | None = None


def get_backend() -> SolverBackend:
    # one backend object per solve keeps the contract thread-safe
    return ClarabelBackend() if _DEFAULT_BACKEND is None else _DEFAULT_BACKEND


def primal_residual(prob: RealConicProblem, x: np.ndarray) -> float:
    res = 0.0
    if prob.a_eq.shape[0]:
        res = float(np.max(np.abs(prob.a_eq @ x - prob.b_eq)))
    for _, size, g, h in prob.psd:
        s = _smat(g @ x + h, size)
        res = max(res, max(0.0, -float(np.linalg.eigvalsh(s)[0])))
    return res


def solve(problem: ConicProblem, tol: float | None = None, backend: SolverBackend | None = None,
          raise_on_failure: bool = False) -> tuple[SolveReport, dict]:
    """Solve a conic problem and return the report and complex witnesses."""
    tol = default_tol() if tol is None else tol
    backend = get_backend() if backend is None else backend
    t0 = time.perf_counter()
    prob = real_embed(problem)
    a_k, b_k, incons = prune_equalities(prob.a_eq, prob.b_eq)
    if incons > 1e-7:
        rep = SolveReport("infeasible", float("nan"), incons, float("nan"),
                          1e3 * (time.perf_counter() - t0), backend.name)
        if raise_on_failure:
            raise SolverFailure("equality constraints are inconsistent", rep.status, rep)
        return rep, {}
    reduced = RealConicProblem(prob.c, prob.c0, a_k, b_k, prob.psd, prob.offsets, prob.dims)
    try:
        sol = backend.solve_real(reduced, tol)
    except Exception as exc:  # backend crash
        rep = SolveReport("failed", float("nan"), float("nan"), float("nan"),
                          1e3 * (time.perf_counter() - t0), backend.name)
        raise SolverFailure(f"backend {backend.name} raised: {exc}", "failed", rep) from exc
    wall = 1e3 * (time.perf_counter() - t0)
    if sol.x is None:
        rep = SolveReport(sol.status, float("nan"), float("nan"), sol.dual_residual, wall, backend.name, sol.iterations)
        if raise_on_failure:
            raise SolverFailure(f"solver status {sol.status}", sol.status, rep)
        return rep, {}
    obj = float(prob.c @ sol.x + prob.c0)
    rep = SolveReport(sol.status, obj, primal_residual(prob, sol.x), sol.dual_residual, wall, backend.name, sol.iterations)
    return rep, prob.unpack(sol.x)
