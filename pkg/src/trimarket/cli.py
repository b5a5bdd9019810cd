"""Command-line front end: one subcommand per study.

Exit codes: 0 success, 1 usage or input error, 2 single run infeasible or
unsolved, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .case import MarketCase, load_case, load_fixture, validate
from .solvers import ADAPTERS, SolveLimits
from .studies import (DEFAULT_GROWTH, DEFAULT_RETROFIT, DEFAULT_SCALARS, DEFAULT_STRATEGIES, StudyRow, run_single,
                      study_cap_sweep, study_clearing_time, study_retrofit, sweep_demand, write_rows)

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_UNVERIFIED = 0, 1, 2, 3
DEFAULT_CASE = "case14g8"


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _strategies(text: str) -> list[tuple[str, ...]]:
    out = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        out.append(() if item.lower() in ("none", "-") else tuple(u.strip() for u in item.split("+")))
    return out


def _retrofit_spec(text: str) -> tuple[str, tuple[float, float]]:
    try:
        unit, rest = text.split("=")
        cost, rate = rest.split(":")
        return unit.strip(), (float(cost), float(rate))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected UNIT=COST:RATE, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("case", nargs="?", default=DEFAULT_CASE,
                        help=f"case file, or the name of a bundled case (default {DEFAULT_CASE})")
    common.add_argument("--mode", choices=("proposed", "cap-and-trade"), default="proposed")
    common.add_argument("--solver", choices=sorted(ADAPTERS), default=None,
                        help="MILP adapter (default: case setting, then $TRIMARKET_SOLVER, then scipy)")
    common.add_argument("--big-m-scale", type=float, default=None, help="multiplier on the estimated big-M bounds")
    common.add_argument("--tol", type=float, default=None, help="verification tolerance (case units)")
    common.add_argument("--time-limit", type=float, default=None, help="solver time limit per run, seconds")
    common.add_argument("--out", type=Path, default=None, help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--timing", action="store_true", help="include wall time in CSV output")

    sweep = argparse.ArgumentParser(add_help=False)
    sweep.add_argument("--workers", type=int, default=1, help="parallel sweep points (processes)")

    p = argparse.ArgumentParser(prog="trimarket",
                                description="Coupled electricity, gas and carbon market equilibria.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="solve and verify one case")
    s = sub.add_parser("sweep-demand", parents=[common, sweep], help="electric demand growth sweep")
    s.add_argument("--growth", type=_floats, default=[g * 100 for g in DEFAULT_GROWTH],
                   help="growth values in percent, comma separated (default 0,5,...,30)")
    s = sub.add_parser("retrofit", parents=[common, sweep], help="retrofit strategies")
    s.add_argument("--strategies", type=_strategies, default=None,
                   help='";"-separated unit sets joined by "+", e.g. "none;G1;G1+G2"')
    s.add_argument("--spec", type=_retrofit_spec, action="append", default=None,
                   help="retrofit data UNIT=COST:RATE (repeatable; default G1=15:0.1 G2=7:0.1 G3=7:0.1)")
    s = sub.add_parser("clearing-time", parents=[common, sweep], help="carbon clearing period lengths")
    s.add_argument("--scalars", type=_ints, default=list(DEFAULT_SCALARS), help="hours per period (default 1,3,12,24)")
    s = sub.add_parser("cap-sweep", parents=[common, sweep], help="allowance total / cap sweep")
    s.add_argument("--totals", type=_floats, required=True, help="allowance totals in ton, comma separated")
    return p


def _load(ref: str) -> MarketCase:
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise UsageError(f"case file not found: {ref}")
        case = load_case(path)
    else:
        try:
            case = load_fixture(ref)
        except FileNotFoundError:
            raise UsageError(f"no case file or bundled case named {ref!r}") from None
    report = validate(case)
    if not report.ok:
        raise UsageError("invalid case: " + "; ".join(report.errors))
    return case


def _solve_kwargs(args) -> dict:
    kw = {"adapter": args.solver, "big_m_scale": args.big_m_scale, "tol": args.tol}
    if args.time_limit is not None:
        kw["limits"] = SolveLimits(time_limit=args.time_limit)
    return kw


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)


def _cmd_run(args, case: MarketCase) -> int:
    sol, row, outcome = run_single(case, args.mode, label=case.name or "case", **_solve_kwargs(args))
    if args.format == "json":
        doc = {"row": row.flat(), "stats": {k: v for k, v in outcome.result.stats.items() if k != "message"},
               "assemble_time": outcome.assemble_time}
        if outcome.report is not None:
            doc["verification"] = outcome.report.to_dict()
        if sol is not None:
            doc["carbon_price"] = {str(k): v for k, v in sorted(sol.carbon_price.items())}
        text = json.dumps(doc, indent=2, default=str) + "\n"
        if args.out is not None:
            args.out.write_text(text, encoding="utf-8")
    else:
        text = write_rows([row], args.out, "csv", timing=args.timing)
    _emit(text, args.out)
    if sol is None:
        print(f"trimarket: no equilibrium found ({row.status})", file=sys.stderr)
        return EXIT_INFEASIBLE
    if not row.verified:
        print(f"trimarket: verification failed: {row.failed_checks}", file=sys.stderr)
        return EXIT_UNVERIFIED
    return EXIT_OK


def _cmd_sweep(args, case: MarketCase) -> int:
    kw = _solve_kwargs(args)
    common = dict(mode=args.mode, workers=args.workers, **kw)
    if args.command == "sweep-demand":
        rows = sweep_demand(case, [g / 100.0 for g in args.growth], **common)
    elif args.command == "retrofit":
        specs = dict(DEFAULT_RETROFIT)
        specs.update(dict(args.spec or ()))
        rows = study_retrofit(case, args.strategies or DEFAULT_STRATEGIES, specs, **common)
    elif args.command == "clearing-time":
        rows = study_clearing_time(case, args.scalars, **common)
    else:
        rows = study_cap_sweep(case, args.totals, **common)
    extra = {"command": args.command, "case": case.name, "mode": args.mode}
    _emit(write_rows(rows, args.out, args.format, extra, timing=args.timing), args.out)
    return _sweep_exit(rows)


def _sweep_exit(rows: Sequence[StudyRow]) -> int:
    # infeasible points are expected in sweeps; only solved-but-unverified rows fail the command
    bad = [r for r in rows if r.status in ("optimal", "feasible") and not r.verified]
    for r in bad:
        print(f"trimarket: row {r.label} failed verification: {r.failed_checks}", file=sys.stderr)
    return EXIT_UNVERIFIED if bad else EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        case = _load(args.case)
        if args.command == "run":
            return _cmd_run(args, case)
        return _cmd_sweep(args, case)
    except (UsageError, KeyError, ValueError, OSError, RuntimeError) as exc:
        where = type(exc).__module__
        where = "" if where in ("builtins", __name__) else f" [{where}]"
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"trimarket: error{where}: {msg}", file=sys.stderr)
        return EXIT_USAGE


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_entry()
