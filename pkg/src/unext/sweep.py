"""Parameter sweeps over channel families, paired with the matching oracle."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .conic import default_tol
from .errors import SolverFailure
from .oracle import depolarizing_bs, erasure_alpha_bound, identity_unext, semicausal_erasure_bs
from .quantum import channel_from_descriptor
from .sdp import alpha_of_ell, unext_alpha_bipartite

FAMILIES = ("identity", "erasure", "depolarizing", "semicausal_erasure", "flagged_erasure")
COLUMNS = ("family", "d", "p", "q", "ell", "alpha", "value_bits", "oracle_bits", "oracle_relation", "status")


@dataclass(frozen=True)
class Grid:
    start: float
    stop: float
    steps: int

    def points(self) -> list[float]:
        if self.steps < 1:
            raise ValueError("a grid needs at least one point")
        return [float(x) for x in np.linspace(self.start, self.stop, self.steps)]


@dataclass(frozen=True)
class SweepSpec:
    family: str
    d: int = 2
    p: Grid = field(default_factory=lambda: Grid(0.0, 0.5, 26))
    q: Grid = field(default_factory=lambda: Grid(0.0, 0.0, 1))
    ell: int = 10
    tol: float | None = None
    nonsignaling: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")

    def tasks(self) -> list[tuple]:
        qs = self.q.points() if self.family == "flagged_erasure" else [0.0]
        return [(self.family, self.d, p, q, self.ell, self.tol, self.nonsignaling) for p in self.p.points() for q in qs]

    @staticmethod
    def from_dict(raw: dict) -> "SweepSpec":
        raw = dict(raw)
        for key in ("p", "q"):
            if isinstance(raw.get(key), dict):
                raw[key] = Grid(**raw[key])
        return SweepSpec(**raw)


def oracle_for(family: str, d: int, p: float, ell: int) -> tuple[float, str]:
    """Oracle value and the inequality the SDP value must satisfy against it."""
    if family == "identity":
        return identity_unext(d).value_bits, "sdp>=oracle"
    if family == "depolarizing":
        return depolarizing_bs(d, p).value_bits, "sdp>=oracle"
    if family == "erasure":
        return erasure_alpha_bound(d, p, alpha_of_ell(ell)).value_bits, "sdp<=oracle"
    if family == "semicausal_erasure":
        return semicausal_erasure_bs(d, p).value_bits, "sdp>=oracle"
    return math.nan, ""


def run_point(task: tuple) -> dict:
    family, d, p, q, ell, tol, nonsignaling = task
    desc = {"kind": family, "d": d, "p": p, "q": q}
    oracle, relation = oracle_for(family, d, p, ell)
    row = {"family": family, "d": d, "p": p, "q": q, "ell": ell, "alpha": alpha_of_ell(ell),
           "value_bits": math.nan, "oracle_bits": oracle, "oracle_relation": relation, "status": "failed"}
    try:
        res = unext_alpha_bipartite(channel_from_descriptor(desc), ell, tol, nonsignaling)
    except SolverFailure as exc:
        row["status"] = exc.status or "failed"
        return row
    row["value_bits"] = res.value_bits
    row["status"] = res.report.status
    return row


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[dict]:
    """Solve every grid point; rows come back in grid order whatever ``jobs`` is."""
    tasks = spec.tasks()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_point, tasks))
    return [run_point(t) for t in tasks]


def meta(spec: SweepSpec) -> dict:
    tol = default_tol() if spec.tol is None else spec.tol
    return {"version": __version__, "ell": spec.ell, "tol": tol, "spec": asdict(spec)}


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".10g")
    return str(v)


def rows_to_csv(rows: list[dict], info: dict) -> str:
    buf = io.StringIO()
    buf.write("# meta " + json.dumps(info, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in COLUMNS])
    return buf.getvalue()


def rows_to_json(rows: list[dict], info: dict) -> str:
    clean = [{c: (None if isinstance(r[c], float) and math.isnan(r[c]) else r[c]) for c in COLUMNS} for r in rows]
    return json.dumps({"meta": info, "rows": clean}, indent=2, sort_keys=True) + "\n"


def relation_holds(row: dict, slack: float) -> bool | None:
    """Whether a row satisfies its oracle inequality; None when there is nothing to compare."""
    v, o = row["value_bits"], row["oracle_bits"]
    if not row["oracle_relation"] or v is None or o is None or math.isnan(v) or math.isnan(o):
        return None
    if row["oracle_relation"] == "sdp>=oracle":
        return v >= o - slack
    return v <= o + slack
