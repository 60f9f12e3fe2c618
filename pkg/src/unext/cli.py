"""Command-line interface.

Exit codes: 0 success, 2 solver failure, 3 invalid input or failed validation.
"""

from __future__ import annotations

import json
import math
import os
import sys

import click
import numpy as np

from . import __version__
from .errors import SolverFailure, UnextError
from .extend import kext_channel_feasible, kext_state_feasible
from .linalg import SubsystemShape
from .oracle import (
    depolarizing_bs,
    erasure_alpha_bound,
    erasure_bs_bound,
    identity_unext,
    semicausal_erasure_bs,
)
from .quantum import (
    BipartiteChannel,
    SuperchannelChoi,
    channel_from_descriptor,
    identity_superchannel,
    isotropic_state,
    max_entangled_state,
    validate_superchannel,
)
from .sdp import unext_alpha_bipartite
from .sweep import Grid, SweepSpec, meta, rows_to_csv, rows_to_json, run_sweep

EXIT_SOLVER = 2
EXIT_INVALID = 3
VALID_TOL = 1e-7


def _fail(message: str, code: int) -> None:
    click.echo(message, err=True)
    sys.exit(code)


def _load_json(source: str) -> dict:
    """Parse inline JSON, a path to a JSON file, or '-' for stdin."""
    try:
        if source == "-":
            return json.load(sys.stdin)
        if os.path.exists(source):
            with open(source) as fh:
                return json.load(fh)
        return json.loads(source)
    except (json.JSONDecodeError, OSError) as exc:
        _fail(f"could not parse JSON: {exc}", EXIT_INVALID)
    return {}


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Unextendible entanglement of channels and states."""


@main.command("unext")
@click.argument("channel")
@click.option("--ell", default=10, show_default=True, help="alpha = 1 + 2^-ell")
@click.option("--tol", type=float, default=None, help="solver tolerance (default: UNEXT_SOLVER_TOL or 1e-8)")
@click.option("--relax-nonsignaling", is_flag=True, help="drop the no-signalling condition on bipartite extensions")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def cmd_unext(channel, ell, tol, relax_nonsignaling, out):
    """Solve the SDP for CHANNEL (descriptor JSON, file path or '-')."""
    desc = _load_json(channel)
    try:
        ch = channel_from_descriptor(desc)
    except (UnextError, ValueError, KeyError, TypeError) as exc:
        _fail(f"invalid channel descriptor: {exc}", EXIT_INVALID)
    try:
        res = unext_alpha_bipartite(ch, ell, tol, nonsignaling=not relax_nonsignaling)
    except SolverFailure as exc:
        _fail(f"solver failure: {exc}", EXIT_SOLVER)
    except UnextError as exc:
        _fail(f"invalid input: {exc}", EXIT_INVALID)
    payload = {"value_bits": res.value_bits, "alpha": res.alpha, "ell": res.ell,
               "bipartite": isinstance(ch, BipartiteChannel), "status": res.report.status,
               "wall_time_ms": res.report.wall_time_ms, "y_star": res.y_star}
    _emit(json.dumps(payload, indent=2) + "\n", out)


@main.command("oracle")
@click.argument("family", type=click.Choice(["identity", "erasure-bs", "erasure-alpha", "depolarizing",
                                             "semicausal-erasure"]))
@click.option("--d", "d", default=2, show_default=True)
@click.option("--p", "p", default=0.0, show_default=True)
@click.option("--alpha", default=None, type=float, help="Renyi order for erasure-alpha")
@click.option("--fprime", type=click.Choice(["min", "max"]), default="min", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
def cmd_oracle(family, d, p, alpha, fprime, fmt):
    """Closed-form value or bound for a channel family."""
    try:
        if family == "identity":
            val = identity_unext(d)
        elif family == "erasure-bs":
            val = erasure_bs_bound(d, p)
        elif family == "erasure-alpha":
            if alpha is None:
                _fail("erasure-alpha needs --alpha", EXIT_INVALID)
            val = erasure_alpha_bound(d, p, alpha)
        elif family == "depolarizing":
            val = depolarizing_bs(d, p, fprime)
        else:
            val = semicausal_erasure_bs(d, p)
    except (UnextError, ValueError) as exc:
        _fail(f"invalid parameters: {exc}", EXIT_INVALID)
    if fmt == "json":
        click.echo(json.dumps({"value_bits": val.value_bits, "regime": val.regime, "is_exact": val.is_exact}))
    else:
        kind = "exact" if val.is_exact else "upper bound"
        click.echo(f"{val.value_bits:.10g}\t{kind}\t{val.regime}")


@main.command("kext")
@click.option("--state", type=click.Choice(["isotropic", "maxent"]), default=None)
@click.option("--channel", default=None, help="channel descriptor JSON instead of a state")
@click.option("--d", "d", default=2, show_default=True)
@click.option("--fidelity", "fidelity", default=None, type=float, help="isotropic fidelity F")
@click.option("--k", "k", default=2, show_default=True)
@click.option("--tol", type=float, default=None)
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
def cmd_kext(state, channel, d, fidelity, k, tol, fmt):
    """k-extendibility of an isotropic or maximally entangled state, or of a channel."""
    if (state is None) == (channel is None):
        _fail("give exactly one of --state or --channel", EXIT_INVALID)
    try:
        if channel is not None:
            ch = channel_from_descriptor(_load_json(channel))
            if isinstance(ch, BipartiteChannel):
                _fail("kext supports point-to-point channels only", EXIT_INVALID)
            rep, _ = kext_channel_feasible(ch, k, tol)
        else:
            if state == "isotropic":
                if fidelity is None:
                    _fail("isotropic state needs --fidelity", EXIT_INVALID)
                rho = isotropic_state(d, fidelity)
            else:
                rho = max_entangled_state(d)
            rep = kext_state_feasible(rho, SubsystemShape([d, d], ["A", "B"]), k, tol)
    except SolverFailure as exc:
        _fail(f"solver failure: {exc}", EXIT_SOLVER)
    except (UnextError, ValueError, KeyError) as exc:
        _fail(f"invalid input: {exc}", EXIT_INVALID)
    verdict = "feasible" if rep.feasible else "infeasible"
    if fmt == "json":
        click.echo(json.dumps({"k": k, "feasible": rep.feasible, "margin": rep.margin}))
    else:
        click.echo(f"{verdict}\tk={k}\tmargin={rep.margin:.3e}")


@main.command("sweep")
@click.option("--family", type=click.Choice(["identity", "erasure", "depolarizing", "semicausal_erasure",
                                             "flagged_erasure"]), default=None)
@click.option("--spec", "spec_json", default=None, help="SweepSpec JSON (inline or path); overrides grid flags")
@click.option("--d", "d", default=2, show_default=True)
@click.option("--p", "p", nargs=3, type=(float, float, int), default=(0.0, 0.5, 26), show_default=True,
              help="start stop steps")
@click.option("--q", "q", nargs=3, type=(float, float, int), default=(0.0, 0.0, 1), show_default=True,
              help="start stop steps (flagged_erasure only)")
@click.option("--ell", default=10, show_default=True)
@click.option("--tol", type=float, default=None)
@click.option("--relax-nonsignaling", is_flag=True)
@click.option("--jobs", default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
def cmd_sweep(family, spec_json, d, p, q, ell, tol, relax_nonsignaling, jobs, out, fmt):
    """Figure data: SDP values on a parameter grid next to the oracle."""
    try:
        if spec_json is not None:
            spec = SweepSpec.from_dict(_load_json(spec_json))
        else:
            if family is None:
                _fail("give --family or --spec", EXIT_INVALID)
            spec = SweepSpec(family, d, Grid(*p), Grid(*q), ell, tol, not relax_nonsignaling)
        spec.tasks()
    except (ValueError, TypeError) as exc:
        _fail(f"invalid sweep: {exc}", EXIT_INVALID)
    rows = run_sweep(spec, jobs)
    info = meta(spec)
    _emit(rows_to_csv(rows, info) if fmt == "csv" else rows_to_json(rows, info), out)
    if any(r["status"] not in ("optimal", "inaccurate") for r in rows):
        click.echo("some grid points did not solve; see the status column", err=True)
        sys.exit(EXIT_SOLVER)


@main.command("validate-superchannel")
@click.argument("source", required=False)
@click.option("--example", type=click.Choice(["identity"]), default=None, help="validate a built-in superchannel")
@click.option("--d", "d", default=2, show_default=True)
def cmd_validate_superchannel(source, example, d):
    """Check the validity conditions of a superchannel Choi operator.

    SOURCE is JSON with "dims" [dA, dD, dC, dB] and "re"/"im" matrices ordered (A, D, C, B).
    """
    if example == "identity":
        theta = identity_superchannel(d, d)
    elif source is None:
        _fail("give SOURCE or --example", EXIT_INVALID)
    else:
        raw = _load_json(source)
        try:
            re = np.asarray(raw["re"], dtype=float)
            im = np.asarray(raw.get("im", np.zeros_like(re)), dtype=float)
            theta = SuperchannelChoi(re + 1j * im, SubsystemShape(raw["dims"], ["A", "D", "C", "B"]))
        except (KeyError, ValueError, UnextError) as exc:
            _fail(f"invalid superchannel: {exc}", EXIT_INVALID)
    res = validate_superchannel(theta)
    ok = all(v <= VALID_TOL and not math.isnan(v) for v in res.values())
    click.echo(json.dumps({"valid": ok, "residuals": res}))
    if not ok:
        sys.exit(EXIT_INVALID)


if __name__ == "__main__":
    main()
