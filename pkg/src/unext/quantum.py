"""Channels and superchannels represented by unnormalized Choi operators.

Conventions
-----------
* Gamma = sum_ij |ii><jj| (so Gamma = d * Phi), and the Choi operator of N is
  (id x N)(Gamma) with the input copy first.
* Point-to-point channels use labels ``("A", "B")``.  Bipartite channels use
  inputs ``("A", "B")`` and outputs ``("A'", "B'")`` in that order.
* The erasure flag |e> is basis index ``d`` of a (d+1)-dimensional output.
* A superchannel is stored through the Choi operator of its bipartite channel
  Q_{CB -> AD}, in the order (A, D, C, B).  For bipartite superchannels each
  role is a group of labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidDimension,
    InvalidProbability,
    InvalidSuperchannel,
    ShapeMismatch,
)
from .linalg import (
    SubsystemShape,
    basis_ket,
    hermitize,
    kron,
    partial_trace,
    partial_transpose,
    permute_systems,
    proj,
)

TRACE_TOL = 1e-8


def gamma(d: int) -> np.ndarray:
    """Unnormalized maximally entangled operator on two d-level systems."""
    v = np.eye(d, dtype=complex).reshape(-1)
    return np.outer(v, v)


def max_entangled_state(d: int) -> np.ndarray:
    return gamma(d) / d


@dataclass(frozen=True)
class ChoiChannel:
    """Choi operator with labelled input and output subsystems."""

    choi: np.ndarray
    shape: SubsystemShape
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    cp_only: bool = False
    trace_tol: float = TRACE_TOL

    def __post_init__(self):
        a = hermitize(self.choi)
        if a.shape[0] != self.shape.total:
            raise DimensionMismatch(f"Choi dim {a.shape[0]} != {self.shape.dims}")
        if set(self.inputs) & set(self.outputs):
            raise ShapeMismatch("inputs and outputs overlap")
        if set(self.inputs) | set(self.outputs) != set(self.shape.labels):
            raise ShapeMismatch("every label must be an input or an output")
        a.setflags(write=False)
        object.__setattr__(self, "choi", a)
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))

    @property
    def d_in(self) -> int:
        return self.shape.dim_of(self.inputs)

    @property
    def d_out(self) -> int:
        return self.shape.dim_of(self.outputs)

    def cp_residual(self) -> float:
        return max(0.0, -float(np.linalg.eigvalsh(self.choi)[0]))

    def tp_residual(self) -> float:
        marg = partial_trace(self.choi, self.shape, self.inputs)
        return float(np.max(np.abs(marg - np.eye(self.d_in))))

    def is_valid(self) -> bool:
        ok = self.cp_residual() <= self.trace_tol
        return ok and (self.cp_only or self.tp_residual() <= self.trace_tol)

    def canonical(self) -> np.ndarray:
        """Choi matrix with all inputs first, then all outputs."""
        return permute_systems(self.choi, self.shape, self.inputs + self.outputs)


@dataclass(frozen=True)
class BipartiteChannel:
    """Channel with inputs (A, B) and outputs (A', B'), stored in that order."""

    channel: ChoiChannel
    semicausal_checked: bool = False

    def __post_init__(self):
        ch = self.channel
        if ch.shape.labels != ("A", "B", "A'", "B'"):
            raise ShapeMismatch(f"bipartite labels must be A, B, A', B'; got {ch.shape.labels}")
        if self.semicausal_checked and semicausal_residual(ch) > ch.trace_tol:
            raise ShapeMismatch("channel signals from Bob to Alice")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.channel.shape.dims  # type: ignore[return-value]

    @property
    def choi(self) -> np.ndarray:
        return self.channel.choi


def p2p(choi: np.ndarray, d_in: int, d_out: int, cp_only: bool = False) -> ChoiChannel:
    return ChoiChannel(choi, SubsystemShape([d_in, d_out], ["A", "B"]), ("A",), ("B",), cp_only)


def bipartite(choi: np.ndarray, dims: Sequence[int], check: bool = True) -> BipartiteChannel:
    shape = SubsystemShape(dims, ["A", "B", "A'", "B'"])
    ch = ChoiChannel(choi, shape, ("A", "B"), ("A'", "B'"))
    return BipartiteChannel(ch, semicausal_checked=check)


def semicausal_residual(ch: ChoiChannel) -> float:
    """Residual of the Choi condition for no signalling from B to A."""
    d_b = ch.shape.dim("B")
    lhs = partial_trace(ch.choi, ch.shape, ["A", "B", "A'"])
    marg = partial_trace(ch.choi, ch.shape, ["A", "A'"])
    sub = ch.shape.sub(["A", "B", "A'"])
    rhs = permute_systems(kron(marg, np.eye(d_b)) / d_b, SubsystemShape(
        [ch.shape.dim("A"), ch.shape.dim("A'"), d_b], ["A", "A'", "B"]), sub.labels)
    return float(np.max(np.abs(lhs - rhs)))


def as_bipartite(ch: ChoiChannel | BipartiteChannel) -> BipartiteChannel:
    """View a point-to-point channel A -> B as a bipartite one with trivial B and A'."""
    if isinstance(ch, BipartiteChannel):
        return ch
    if len(ch.inputs) != 1 or len(ch.outputs) != 1:
        raise ShapeMismatch("only single-input single-output channels convert directly")
    a = ch.canonical()
    return bipartite(a, [ch.d_in, 1, 1, ch.d_out], check=False)


def state_as_channel(rho: np.ndarray, d_a: int, d_b: int) -> BipartiteChannel:
    """A bipartite state as a channel with one-dimensional inputs."""
    return bipartite(rho, [1, 1, d_a, d_b], check=False)


def choi_from_kraus(kraus: Sequence[np.ndarray], d_in: int, d_out: int) -> ChoiChannel:
    choi = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    total = np.zeros((d_in, d_in), dtype=complex)
    for k in kraus:
        k = np.asarray(k, dtype=complex)
        if k.shape != (d_out, d_in):
            raise DimensionMismatch(f"Kraus operator has shape {k.shape}, expected {(d_out, d_in)}")
        v = (np.kron(np.eye(d_in), k) @ np.eye(d_in, dtype=complex).reshape(-1))
        choi += np.outer(v, v.conj())
        total += k.conj().T @ k
    cp_only = not np.allclose(total, np.eye(d_in), atol=TRACE_TOL)
    return p2p(choi, d_in, d_out, cp_only=cp_only)


def apply_channel(ch: ChoiChannel, state, shape: SubsystemShape, on: str | Sequence[str]) -> np.ndarray:
    """Apply ``ch`` to the subsystems ``on`` of ``state``.

    The outputs replace the inputs at the position of the first label in
    ``on``, in the channel's output order.
    """
    on = (on,) if isinstance(on, str) else tuple(on)
    if len(on) != len(ch.inputs):
        raise DimensionMismatch("number of target systems differs from channel inputs")
    if shape.dim_of(on) != ch.d_in or any(shape.dim(s) != ch.shape.dim(t) for s, t in zip(on, ch.inputs)):
        raise DimensionMismatch("target system dimensions do not match the channel input")
    rest = [s for s in shape.labels if s not in on]
    rho = permute_systems(state, shape, rest + list(on))
    d_r = shape.dim_of(rest)
    t = rho.reshape(d_r, ch.d_in, d_r, ch.d_in)
    g = ch.canonical().reshape(ch.d_in, ch.d_out, ch.d_in, ch.d_out)
    out = np.einsum("raRA,abAB->rbRB", t, g).reshape(d_r * ch.d_out, d_r * ch.d_out)
    # move outputs back to where the inputs were
    first = shape.labels.index(on[0])
    before = [s for s in shape.labels[:first] if s not in on]
    after = [s for s in rest if s not in before]
    out_shape = SubsystemShape([shape.dim(s) for s in rest] + [ch.d_out], rest + ["__out"])
    return permute_systems(out, out_shape, before + ["__out"] + after)


def compose(second: ChoiChannel, first: ChoiChannel) -> ChoiChannel:
    """Choi operator of second o first for point-to-point channels."""
    if second.d_in != first.d_out:
        raise DimensionMismatch("output of first does not feed input of second")
    g = first.canonical()
    shape = SubsystemShape([first.d_in, first.d_out], ["A", "M"])
    out = apply_channel(p2p(second.canonical(), second.d_in, second.d_out), g, shape, "M")
    return p2p(out, first.d_in, second.d_out)


def tensor_channels(n1: ChoiChannel, n2: ChoiChannel) -> ChoiChannel:
    """Choi of n1 x n2 in the interleaved order (A1, A2, B1, B2)."""
    raw = kron(n1.canonical(), n2.canonical())
    shape = SubsystemShape([n1.d_in, n1.d_out, n2.d_in, n2.d_out], ["A1", "B1", "A2", "B2"])
    order = ["A1", "A2", "B1", "B2"]
    return ChoiChannel(
        permute_systems(raw, shape, order), shape.reordered(order), ("A1", "A2"), ("B1", "B2"),
        cp_only=n1.cp_only or n2.cp_only,
    )


def _check_p(p: float, lo: float = 0.0, hi: float = 1.0) -> float:
    p = float(p)
    if not (lo - 1e-12 <= p <= hi + 1e-12) or np.isnan(p):
        raise InvalidProbability(f"parameter {p} outside [{lo}, {hi}]")
    return min(max(p, lo), hi)


def _check_d(d: int) -> int:
    if int(d) != d or d < 1:
        raise InvalidDimension(f"dimension must be a positive integer, got {d}")
    return int(d)


def make_identity(d: int) -> ChoiChannel:
    d = _check_d(d)
    return p2p(gamma(d), d, d)


def make_replacer(d_in: int, sigma: np.ndarray) -> ChoiChannel:
    sigma = np.asarray(sigma, dtype=complex)
    return p2p(kron(np.eye(d_in), sigma), d_in, sigma.shape[0])


def erasure_flag(d: int) -> np.ndarray:
    return proj(basis_ket(d, d + 1))


def embed_in_erasure_space(m: np.ndarray, d: int) -> np.ndarray:
    """Pad a d x d operator into the (d+1)-dimensional flagged space."""
    out = np.zeros((d + 1, d + 1), dtype=complex)
    out[:d, :d] = m
    return out


def _gamma_into(d: int) -> np.ndarray:
    """Gamma between a d-level input and the non-flag part of a (d+1)-level output."""
    v = np.zeros((d, d + 1), dtype=complex)
    v[np.arange(d), np.arange(d)] = 1.0
    v = v.reshape(-1)
    return np.outer(v, v)


def make_erasure(d: int, p: float) -> ChoiChannel:
    d = _check_d(d)
    p = _check_p(p)
    choi = (1 - p) * _gamma_into(d) + p * kron(np.eye(d), erasure_flag(d))
    return p2p(choi, d, d + 1)


def make_depolarizing(d: int, p: float) -> ChoiChannel:
    d = _check_d(d)
    p = _check_p(p, 0.0, d * d / (d * d - 1) if d > 1 else 1.0)
    choi = (1 - p) * gamma(d) + p * np.eye(d * d, dtype=complex) / d
    return p2p(choi, d, d)


def isotropic_state(d: int, F: float) -> np.ndarray:
    F = _check_p(F)
    phi = max_entangled_state(d)
    return F * phi + (1 - F) * (np.eye(d * d) - phi) / (d * d - 1)


def depolarizing_fidelity(d: int, p: float) -> float:
    return 1 - p + p / d**2


def make_semicausal_erasure(d: int, p: float) -> BipartiteChannel:
    """A -> A'B' channel that routes the input to Alice w.p. p and to Bob otherwise."""
    d = _check_d(d)
    p = _check_p(p)
    e = erasure_flag(d)
    g = _gamma_into(d)
    shape3 = SubsystemShape([d, d + 1, d + 1], ["A", "A'", "B'"])
    to_alice = kron(g, e)
    to_bob = permute_systems(kron(g, e), SubsystemShape([d, d + 1, d + 1], ["A", "B'", "A'"]), shape3.labels)
    choi = p * to_alice + (1 - p) * to_bob
    return bipartite(choi, [d, 1, d + 1, d + 1])


def _depolarize_qubit(m: np.ndarray, q: float) -> np.ndarray:
    return (1 - q) * m + q * np.trace(m) * np.eye(2) / 2


def make_flagged_erasure(d: int, p: float, q: float) -> BipartiteChannel:
    """Erasure A -> B' whose erasure bit is sent to Alice (A') through D_q."""
    d = _check_d(d)
    p = _check_p(p)
    q = _check_p(q)
    flag1 = _depolarize_qubit(proj(basis_ket(1, 2)), q)
    flag0 = _depolarize_qubit(proj(basis_ket(0, 2)), q)
    shape = SubsystemShape([d, d + 1, 2], ["A", "B'", "A'"])
    kept = kron(_gamma_into(d), flag1)
    lost = kron(np.eye(d), erasure_flag(d), flag0)
    choi = permute_systems((1 - p) * kept + p * lost, shape, ["A", "A'", "B'"])
    return bipartite(choi, [d, 1, 2, d + 1])


def channel_from_descriptor(desc: dict) -> ChoiChannel | BipartiteChannel:
    """Build a channel from the JSON descriptor used by the CLI."""
    kind = desc.get("kind")
    if kind == "custom":
        block = desc.get("choi")
        if block is None:
            raise ValueError("custom descriptor requires a 'choi' block")
        re = np.asarray(block["re"], dtype=float)
        im = np.asarray(block.get("im", np.zeros_like(re)), dtype=float)
        shape = SubsystemShape(block["dims"], block["labels"])
        inputs = tuple(block["inputs"])
        outputs = tuple(s for s in shape.labels if s not in inputs)
        ch = ChoiChannel(re + 1j * im, shape, inputs, outputs)
        if shape.labels == ("A", "B", "A'", "B'") and inputs == ("A", "B"):
            return BipartiteChannel(ch, semicausal_checked=True)
        if len(inputs) != 1 or len(outputs) != 1:
            raise ValueError("custom channels must be point-to-point or labelled A, B, A', B'")
        return ch
    if "d" not in desc:
        raise ValueError("descriptor requires 'd'")
    d = desc["d"]
    if kind == "identity":
        return make_identity(d)
    if kind == "erasure":
        return make_erasure(d, desc["p"])
    if kind == "depolarizing":
        return make_depolarizing(d, desc["p"])
    if kind == "semicausal_erasure":
        return make_semicausal_erasure(d, desc["p"])
    if kind == "flagged_erasure":
        return make_flagged_erasure(d, desc["p"], desc.get("q", 0.0))
    raise ValueError(f"unknown channel kind {kind!r}")


def channel_to_descriptor(ch: ChoiChannel) -> dict:
    return {
        "kind": "custom",
        "d": ch.d_in,
        "choi": {
            "dims": list(ch.shape.dims),
            "labels": list(ch.shape.labels),
            "inputs": list(ch.inputs),
            "re": ch.choi.real.tolist(),
            "im": ch.choi.imag.tolist(),
        },
    }


# --- superchannels -------------------------------------------------------------


@dataclass(frozen=True)
class SuperchannelChoi:
    """Choi operator of the bipartite channel Q_{CB -> AD} of a superchannel.

    ``roles`` maps each of "A", "D", "C", "B" to a tuple of labels so that the
    same type covers bipartite superchannels; the matrix is ordered
    A-group, D-group, C-group, B-group.
    """

    choi: np.ndarray
    shape: SubsystemShape
    roles: dict = field(default_factory=dict)

    def __post_init__(self):
        roles = dict(self.roles) or {r: (r,) for r in "ADCB"}
        roles = {r: tuple(roles[r]) for r in "ADCB"}
        order = sum((roles[r] for r in "ADCB"), ())
        if tuple(self.shape.labels) != order:
            raise ShapeMismatch(f"superchannel labels {self.shape.labels} not in (A, D, C, B) order {order}")
        a = hermitize(self.choi)
        if a.shape[0] != self.shape.total:
            raise DimensionMismatch("Choi size does not match shape")
        a.setflags(write=False)
        object.__setattr__(self, "choi", a)
        object.__setattr__(self, "roles", roles)

    def dim(self, role: str) -> int:
        return self.shape.dim_of(self.roles[role])


def superchannel_from_channel(q: ChoiChannel, roles: dict) -> SuperchannelChoi:
    """Wrap the Choi of a channel whose outputs are A+D and inputs C+B."""
    order = sum((tuple(roles[r]) for r in "ADCB"), ())
    return SuperchannelChoi(permute_systems(q.choi, q.shape, order), q.shape.reordered(order), roles)


def _relabel(ch: ChoiChannel, names: Sequence[str]) -> tuple[np.ndarray, SubsystemShape]:
    a = ch.canonical()
    dims = [ch.shape.dim(s) for s in ch.inputs + ch.outputs]
    return a, SubsystemShape(dims, names)


def superchannel_1wlocc(pre: Sequence[ChoiChannel], post: Sequence[ChoiChannel]) -> SuperchannelChoi:
    """Superchannel sum_x D^x o (.) o E^x from an instrument {E^x} and channels {D^x}.

    ``pre[x]`` maps C -> A and ``post[x]`` maps B -> D.
    """
    if len(pre) != len(post) or not pre:
        raise InvalidSuperchannel("need matching non-empty lists of pre and post maps")
    total = None
    for e, dch in zip(pre, post):
        ea, es = _relabel(e, ["C", "A"])
        da, ds = _relabel(dch, ["B", "D"])
        term = permute_systems(kron(ea, da), es + ds, ["A", "D", "C", "B"])
        total = term if total is None else total + term
        shape = (es + ds).reordered(["A", "D", "C", "B"])
    return SuperchannelChoi(total, shape)


def identity_superchannel(d_a: int, d_b: int) -> SuperchannelChoi:
    return superchannel_1wlocc([make_identity(d_a)], [make_identity(d_b)])


def replacer_superchannel(d_a: int, d_b: int, target: ChoiChannel, sigma: np.ndarray | None = None) -> SuperchannelChoi:
    """Superchannel that discards its argument and outputs ``target`` (C -> D)."""
    sigma = np.eye(d_a) / d_a if sigma is None else np.asarray(sigma)
    tg, ts = _relabel(target, ["C", "D"])
    raw = kron(sigma, np.eye(d_b), tg)
    shape = SubsystemShape([d_a, d_b] + list(ts.dims), ["A", "B", "C", "D"])
    return SuperchannelChoi(permute_systems(raw, shape, ["A", "D", "C", "B"]), shape.reordered(["A", "D", "C", "B"]))


def validate_superchannel(theta: SuperchannelChoi) -> dict:
    """Residuals of positivity, trace preservation and no signalling B -> A."""
    r = theta.roles
    shp = theta.shape
    a = theta.choi
    psd = max(0.0, -float(np.linalg.eigvalsh(a)[0]))
    cb = r["C"] + r["B"]
    tp = partial_trace(a, shp, cb)
    tp_res = float(np.max(np.abs(tp - np.eye(tp.shape[0]))))
    keep = r["A"] + r["C"] + r["B"]
    lhs = partial_trace(a, shp, keep)
    ac = partial_trace(a, shp, r["A"] + r["C"])
    d_b = theta.dim("B")
    sub_ac = shp.sub(r["A"] + r["C"])
    sub_b = shp.sub(r["B"])
    rhs = permute_systems(kron(ac, np.eye(d_b)) / d_b, sub_ac + sub_b, shp.sub(keep).labels)
    ns_res = float(np.max(np.abs(lhs - rhs)))
    return {"psd": psd, "tp": tp_res, "nonsignaling": ns_res}


def is_valid_superchannel(theta: SuperchannelChoi, tol: float = 1e-7) -> bool:
    return all(v <= tol for v in validate_superchannel(theta).values())


def superchannel_apply(theta: SuperchannelChoi, n: ChoiChannel, check: bool = True, tol: float = 1e-7) -> ChoiChannel:
    """Gamma^M_{CD} = Tr_{AB}[T_{AB}(I_{CD} x Gamma^N_{AB}) Gamma^Theta]."""
    r = theta.roles
    if len(n.inputs) != len(r["A"]) or len(n.outputs) != len(r["B"]):
        raise ShapeMismatch("channel roles do not match the superchannel's A and B groups")
    for s, t in zip(n.inputs + n.outputs, r["A"] + r["B"]):
        if n.shape.dim(s) != theta.shape.dim(t):
            raise ShapeMismatch(f"dimension of {s} differs from superchannel system {t}")
    if check and not is_valid_superchannel(theta, tol):
        raise InvalidSuperchannel(f"superchannel residuals {validate_superchannel(theta)}")
    d_a, d_d, d_c, d_b = (theta.dim(x) for x in "ADCB")
    gn = n.canonical().reshape(d_a, d_b, d_a, d_b)
    th = theta.choi.reshape(d_a, d_d, d_c, d_b, d_a, d_d, d_c, d_b)
    # Gamma^N[a'b', ab] * Theta[(a', d, c, b'), (a, d', c', b)]
    out = np.einsum("xyab,xdcyaDCb->cdCD", gn, th).reshape(d_c * d_d, d_c * d_d)
    labels_c = r["C"]
    labels_d = r["D"]
    shape = SubsystemShape(
        [theta.shape.dim(s) for s in labels_c + labels_d], list(labels_c) + list(labels_d)
    )
    return ChoiChannel(out, shape, labels_c, labels_d, cp_only=n.cp_only)
