"""Command-line front end emitting CSV/JSON tables and figure data.

Exit codes: 0 success, 1 usage or invalid parameters, 2 no equilibrium of
the requested kind, 3 a verification check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import analysis, simulate
from .equilibrium import (
    MultipleEquilibria,
    NoInteriorEquilibrium,
    RegimeError,
    mu_bar,
    rhs_curve,
    self_consistency_gap,
    solve,
    solve_complete_info,
    v_bounds_da,
)
from .info import BestResponse, foc_residual
from .model import (
    Capacities,
    MarketParams,
    Mechanism,
    allocation_table,
    da_cutoffs,
    da_table,
    r_hat,
)

log = logging.getLogger("schoolri")

EXIT_OK, EXIT_USAGE, EXIT_NONEXISTENCE, EXIT_VERIFY = 0, 1, 2, 3
GRID_NODES = 1001

DEFAULTS = {
    "v": 0.6,
    "mu": 0.05,
    "caps": "1/3,1/3,1/3",
    "mechanism": "da",
    "mu_min": 0.005,
    "mu_max": None,
    "mu_count": 20,
    "mu_spacing": "log",
    "n_students": 100_000,
    "seed": 7,
    "format": "csv",
    "output": None,
    "r": None,
    "r0": None,
    "max_iter": 500,
    "curve": False,
    "r_count": 200,
    "grid": False,
    "tol_scale": 1.0,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- output


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        return "%.12g" % value
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return float("%.12g" % value) if math.isfinite(value) else None
    return value


def csv_text(rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> str:
    if columns is None:
        columns = list(rows[0]) if rows else []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def grid_rows(columns: dict[str, np.ndarray]) -> list[dict]:
    names = list(columns)
    n = len(columns[names[0]])
    return [{k: float(columns[k][i]) for k in names} for i in range(n)]


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}_{suffix}{path.suffix}")


def emit(args, rows: list[dict], extra: Optional[dict[str, list[dict]]] = None,
         meta: Optional[dict] = None) -> None:
    """Write the main table plus optional named side tables.

    CSV mode writes side tables to ``<stem>_<name>.csv`` next to the output
    file, or after a blank line on stdout.  JSON mode nests everything in a
    single object.
    """
    extra = extra or {}
    out = Path(args.output) if args.output else None
    if args.format == "json":
        payload = {"rows": rows}
        if meta:
            payload["meta"] = meta
        payload.update(extra)
        text = json.dumps(_jsonable(payload), indent=2, sort_keys=False) + "\n"
        _write(out, text)
        return
    text = csv_text(rows)
    if out is None:
        for table in extra.values():
            text += "\n" + csv_text(table)
        sys.stdout.write(text)
        return
    _write(out, text)
    for name, table in extra.items():
        _write(_sibling(out, name), csv_text(table))


def _write(path: Optional[Path], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------- parsing


def parse_caps(text) -> Capacities:
    if isinstance(text, Capacities):
        return text
    if isinstance(text, (list, tuple)):
        parts = [float(x) for x in text]
    else:
        parts = [_number(p) for p in str(text).split(",")]
    if len(parts) != 3:
        raise ValueError("caps must be a comma-separated triple")
    if any(not p > 0 for p in parts):
        raise ValueError("capacities must be positive")
    total = sum(parts)
    if abs(total - 1.0) > 1e-3:
        raise ValueError(f"capacities must sum to 1, got {total}")
    # rounded inputs such as 0.3333,0.3333,0.3334 are rescaled exactly
    return Capacities.normalized(*parts)


def _number(text: str) -> float:
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _mechanism(text: str) -> str:
    key = text.strip().lower()
    if key in ("both", "ttc"):
        return key
    return Mechanism.parse(key).value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file whose keys mirror the flags")
    common.add_argument("--v", type=float, help="baseline quality premium of school s")
    common.add_argument("--mu", type=float, help="marginal cost of information")
    common.add_argument("--caps", help="capacities lambda_s,lambda_a,lambda_b")
    common.add_argument("--mechanism", type=str, help="boston, da, both (solve) or ttc (simulate)")
    common.add_argument("--output", "-o", help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--seed", type=int)
    common.add_argument("--n-students", dest="n_students", type=int)
    common.add_argument("--verbose", action="store_true")

    parser = _Parser(prog="schoolri", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("solve", parents=[common],
                   help="interior equilibrium (complete-info cutoff when mu = 0)")
    p = sub.add_parser("complete-info", parents=[common], help="free-information cutoffs")
    p.add_argument("--grid", action="store_true", default=None, help="also emit allocation curves")
    p = sub.add_parser("bounds", parents=[common], help="DA existence bounds on v")
    p.add_argument("--curve", action="store_true", default=None,
                   help="also emit the fixed-point residual along r")
    p.add_argument("--r-count", dest="r_count", type=int)
    p = sub.add_parser("tatonnement", parents=[common], help="iterated DA best responses")
    p.add_argument("--r0", type=float, help="initial belief (default: Boston equilibrium)")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--grid", action="store_true", default=None, help="also emit g at each step")
    p = sub.add_parser("sweep-mu", parents=[common], help="both mechanisms over a cost grid")
    p.add_argument("--mu-min", dest="mu_min", type=float)
    p.add_argument("--mu-max", dest="mu_max", type=float,
                   help="default: 0.999 times the DA existence threshold")
    p.add_argument("--mu-count", dest="mu_count", type=int)
    p.add_argument("--mu-spacing", dest="mu_spacing", choices=("log", "linear"))
    p = sub.add_parser("simulate", parents=[common], help="finite-population Monte Carlo")
    p.add_argument("--r", type=float, help="fixed sab fraction instead of equilibrium play")
    p = sub.add_parser("verify", parents=[common], help="cross-module property checks")
    p.add_argument("--tol-scale", dest="tol_scale", type=float,
                   help="multiply every tolerance (0 forces failures)")
    return parser


def resolve(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse flags, then fill gaps from the JSON config and the defaults."""
    args = build_parser().parse_args(argv)
    config = {}
    if args.config:
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        if not isinstance(config, dict):
            raise UsageError("config must be a JSON object")
        config = {k.replace("-", "_"): v for k, v in config.items()}
    for key, default in DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, config.get(key, default))
    if args.format not in ("csv", "json"):
        raise UsageError(f"unknown format {args.format!r}")
    try:
        args.caps = parse_caps(args.caps)
        args.mechanism = _mechanism(str(args.mechanism))
        args.v, args.mu = float(args.v), float(args.mu)
        args.params = MarketParams(args.v, args.mu, args.caps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.n_students < 1:
        raise UsageError("n-students must be at least 1")
    return args


# ---------------------------------------------------------------- commands


def _diagnostic(args, mech: str, exc: Exception) -> dict:
    info = {
        "error": type(exc).__name__,
        "message": str(exc),
        "mechanism": mech,
        "v": args.v,
        "mu": args.mu,
        "r_hat": r_hat(args.caps),
    }
    if args.mu > 0:
        b = v_bounds_da(args.mu, args.caps)
        info["v_bounds"] = {"v_lower": b.v_lower, "v_upper": b.v_upper}
        info["v_above_upper"] = args.v >= b.v_upper
    if 0.5 < args.v < 1.0:
        info["mu_bar"] = mu_bar(args.v, args.caps)
    return info


def _nonexistence(args, mech: str, exc: Exception) -> int:
    sys.stdout.write(json.dumps(_jsonable(_diagnostic(args, mech, exc)), indent=2) + "\n")
    return EXIT_NONEXISTENCE


def cmd_solve(args) -> int:
    mechs = [Mechanism.BOSTON, Mechanism.DA] if args.mechanism == "both" else [Mechanism.parse(args.mechanism)]
    rows, cols = [], {"theta": np.linspace(0.0, 1.0, GRID_NODES)}
    for mech in mechs:
        try:
            eq = solve(mech, args.params)
        except (NoInteriorEquilibrium, MultipleEquilibria, RegimeError) as exc:
            return _nonexistence(args, mech.value, exc)
        row = eq.summary()
        row["self_consistency"] = self_consistency_gap(eq) if args.mu > 0 else 0.0
        rows.append(row)
        tag = "" if len(mechs) == 1 else "_" + ("B" if mech is Mechanism.BOSTON else "D")
        cols["m" + tag] = eq.strategy(cols["theta"])
        cols["g" + tag] = eq.g(cols["theta"])
    emit(args, rows, {"grid": grid_rows(cols)})
    return EXIT_OK


def cmd_complete_info(args) -> int:
    params = args.params.with_mu(0.0)
    rows, cols = [], {"theta": np.linspace(0.0, 1.0, GRID_NODES)}
    for mech in (Mechanism.BOSTON, Mechanism.DA):
        try:
            eq = solve_complete_info(mech, params)
        except RegimeError as exc:
            return _nonexistence(args, mech.value, exc)
        rows.append({"mechanism": mech.value, "v": args.v, "theta": eq.threshold_theta,
                     "r": eq.r, "welfare": eq.welfare})
        cols["g_" + ("B" if mech is Mechanism.BOSTON else "D")] = eq.g(cols["theta"])
    emit(args, rows, {"grid": grid_rows(cols)} if args.grid else None)
    return EXIT_OK


def cmd_bounds(args) -> int:
    if not args.mu > 0:
        raise UsageError("bounds need --mu > 0")
    b = v_bounds_da(args.mu, args.caps)
    row = {"mu": args.mu, "v_lower": b.v_lower, "v_upper": b.v_upper, "v": args.v,
           "v_inside": b.contains(args.v),
           "mu_bar": mu_bar(args.v, args.caps) if 0.5 < args.v < 1.0 else None}
    extra = None
    if args.curve:
        if args.r_count < 2:
            raise UsageError("r-count must be at least 2")
        lo = r_hat(args.caps)
        r = np.linspace(lo, 1.0, args.r_count + 2)[1:-1]
        extra = {"curve": grid_rows({
            "r": r,
            "residual_B": rhs_curve(Mechanism.BOSTON, args.params, r),
            "residual_D": rhs_curve(Mechanism.DA, args.params, r),
        })}
    emit(args, [row], extra)
    return EXIT_OK


def cmd_tatonnement(args) -> int:
    if not args.mu > 0:
        raise UsageError("tatonnement needs --mu > 0")
    r0 = args.r0
    if r0 is None:
        try:
            r0 = solve(Mechanism.BOSTON, args.params).r
        except (NoInteriorEquilibrium, MultipleEquilibria) as exc:
            return _nonexistence(args, "boston", exc)
    if args.max_iter < 1:
        raise UsageError("max-iter must be positive")
    trace = analysis.tatonnement(args.params, r0, max_iter=args.max_iter)
    rows = trace.rows()
    meta = {"r0": r0, "converged": trace.converged, "corner": trace.corner, "limit": trace.limit}
    extra = None
    if args.grid:
        cols = {"theta": np.linspace(0.0, 1.0, GRID_NODES)}
        for s in trace.steps:
            cols[f"g_{s.k}"] = s.g(cols["theta"])
        extra = {"grid": grid_rows(cols)}
    emit(args, rows, extra, meta=meta)
    return EXIT_OK


def cmd_sweep_mu(args) -> int:
    mu_max = args.mu_max
    if mu_max is None:
        if not 0.5 < args.v < 1.0:
            raise UsageError("give --mu-max when v is outside (1/2, 1)")
        mu_max = 0.999 * mu_bar(args.v, args.caps)
    try:
        grid = analysis.mu_grid(float(args.mu_min), float(mu_max), int(args.mu_count), args.mu_spacing)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = [r.as_dict() for r in analysis.sweep_mu(args.v, args.caps, grid)]
    emit(args, rows)
    return EXIT_OK


def cmd_simulate(args) -> int:
    mech = args.mechanism
    if mech == "both":
        raise UsageError("simulate takes a single mechanism")
    row: dict[str, Any] = {"mechanism": mech, "v": args.v, "mu": args.mu,
                           "seed": args.seed}
    if args.r is not None:
        if not 0.0 <= args.r <= 1.0:
            raise UsageError("--r must lie in [0, 1]")
        reporting = simulate.FixedFraction(args.r)
        row.update(r_theory=args.r, welfare_theory=None)
    else:
        solve_mech = Mechanism.DA if mech == "ttc" else Mechanism.parse(mech)
        try:
            eq = solve(solve_mech, args.params)
        except (NoInteriorEquilibrium, MultipleEquilibria, RegimeError) as exc:
            return _nonexistence(args, solve_mech.value, exc)
        reporting = simulate.StrategyReporting(eq.strategy)
        row.update(r_theory=eq.r, welfare_theory=eq.welfare)
    config = simulate.SimConfig(args.n_students, args.seed, reporting)
    res = simulate.simulate_welfare(config, args.caps, args.params, mech)
    row.update(res.as_dict())
    emit(args, [row])
    return EXIT_OK


# ---------------------------------------------------------------- verify


def _check(report: list, name: str, value: float, tol: float, ok: Optional[bool] = None) -> None:
    passed = bool(value <= tol) if ok is None else bool(ok)
    report.append({"check": name, "value": float(value), "tolerance": float(tol), "passed": passed})


def run_checks(params: MarketParams, n_students: int, seed: int, tol_scale: float = 1.0) -> list[dict]:
    """Table-vs-simulator, ranking and first-order-condition checks."""
    caps = params.caps
    report: list[dict] = []
    t = lambda x: x * tol_scale

    eqs = {m: solve(m, params) for m in (Mechanism.BOSTON, Mechanism.DA)}
    for m, eq in eqs.items():
        tag = m.value
        _check(report, f"{tag}_residual", eq.residual, t(1e-10))
        _check(report, f"{tag}_self_consistency", self_consistency_gap(eq), t(1e-9))
        br = BestResponse(eq.strategy, eq.r, True, float("nan"))
        _check(report, f"{tag}_foc", foc_residual(br, m, eq.r, params), t(1e-8))
    eb, ed = eqs[Mechanism.BOSTON], eqs[Mechanism.DA]
    lo = r_hat(caps)
    _check(report, "ordering_rhat_rB_rD", ed.r - eb.r, 0.0,
           ok=lo < eb.r < ed.r < 1.0 and tol_scale > 0)

    cross = analysis.single_crossing_scan(eb.g, ed.g)
    _check(report, "g_single_crossing", len(cross.crossings), 1,
           ok=cross.single_from_below and tol_scale > 0)
    gap = analysis.cumulative_gap(eb.g, ed.g)
    margin = t(1e-10)
    _check(report, "fosd_min_gap", -float(gap.min()), -margin, ok=bool(np.all(gap > margin)))
    dcross = analysis.single_crossing_scan(eb.strategy.derivative, ed.strategy.derivative)
    _check(report, "dm_single_crossing", len(dcross.crossings), 1,
           ok=dcross.single_from_below and tol_scale > 0)

    students = simulate.sample_students(
        simulate.SimConfig(n_students, seed, simulate.FixedFraction(ed.r)))
    rt = students.sab_fraction
    runs = {
        "boston": (simulate.run_boston(students, caps), allocation_table(Mechanism.BOSTON, rt, caps)),
        "da": (simulate.run_da(students, caps), da_table(rt, caps)),
        "ttc": (simulate.run_ttc(students, caps, seed), da_table(rt, caps)),
    }
    for name, (assigned, table) in runs.items():
        z = simulate.table_z_scores(simulate.mass_table(students, assigned), table, students.n)
        _check(report, f"{name}_table_max_z", float(np.abs(z).max()), t(3.0))
    da_assigned = runs["da"][0]
    by_cutoff, _ = simulate.da_by_cutoffs(students, caps)
    _check(report, "da_rounds_vs_cutoffs", float(np.sum(by_cutoff != da_assigned)), t(0.0),
           ok=np.array_equal(by_cutoff, da_assigned) and tol_scale > 0)
    emp = simulate.realized_cutoffs(students, da_assigned)
    th = da_cutoffs(rt, caps)
    se = np.maximum(simulate.cutoff_standard_errors(th, students, caps), 1.0 / students.n)
    zc = np.abs((np.array([emp.p_s, emp.p_a]) - [th.p_s, th.p_a]) / se).max()
    _check(report, "da_cutoffs_max_z", float(zc), t(3.0))
    _check(report, "da_justified_envy", simulate.envy_count(students, da_assigned), t(0.0),
           ok=simulate.envy_count(students, da_assigned) == 0 and tol_scale > 0)
    return report


def cmd_verify(args) -> int:
    try:
        report = run_checks(args.params, args.n_students, args.seed, args.tol_scale)
    except (NoInteriorEquilibrium, MultipleEquilibria, RegimeError) as exc:
        return _nonexistence(args, "both", exc)
    emit(args, report)
    failed = [r["check"] for r in report if not r["passed"]]
    for name in failed:
        sys.stderr.write(f"check failed: {name}\n")
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "complete-info": cmd_complete_info,
    "bounds": cmd_bounds,
    "tatonnement": cmd_tatonnement,
    "sweep-mu": cmd_sweep_mu,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = resolve(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"schoolri: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
