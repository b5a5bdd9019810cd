"""End-to-end runs and the parameter studies built on them.

``run_single`` goes case -> coupled system -> MILP -> solve -> verification
and condenses the result into a :class:`StudyRow`.  The sweeps apply one case
transformation per row.  Rows whose solve fails or whose verification fails
are kept and marked through ``status`` / ``verified``.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .case import MarketCase, load_case, validate
from .kkt import EquilibriumProblem, assemble_equilibrium_problem, build_system
from .lp import ModelError
from .milp import MilpModel, assemble_milp, estimate_big_m, solve
from .solvers import SolveLimits, SolveResult, get_adapter
from .verify import (Check, EquilibriumSolution, VerificationReport, conservation_residuals, extract_solution,
                     fixed_point_check, merit_order_cem, residual_report)

# unit id -> (new cost, new emission rate)
DEFAULT_RETROFIT = {"G1": (15.0, 0.1), "G2": (7.0, 0.1), "G3": (7.0, 0.1)}
DEFAULT_STRATEGIES = ((), ("G1",), ("G2",), ("G3",), ("G1", "G2"), ("G2", "G3"), ("G1", "G3"), ("G1", "G2", "G3"))
DEFAULT_GROWTH = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30)
DEFAULT_SCALARS = (1, 3, 12, 24)


@dataclass
class RunOutcome:
    case: MarketCase
    mode: str
    result: SolveResult
    problem: EquilibriumProblem
    model: MilpModel
    assemble_time: float
    solution: EquilibriumSolution | None = None
    report: VerificationReport | None = None

    @property
    def ok(self) -> bool:
        return self.solution is not None and self.report is not None and self.report.passed


def solve_equilibrium(case: MarketCase, mode: str = "proposed", adapter=None, limits: SolveLimits | None = None,
                      objective: str | None = None, big_m_scale: float | None = None,
                      tol: float | None = None, verify: bool = True) -> RunOutcome:
    """Build, solve and (optionally) verify the equilibrium of ``case``."""
    cfg_s = case.solver
    start = time.perf_counter()
    system = build_system(case, mode)
    prob = assemble_equilibrium_problem(system)
    cfg = estimate_big_m(system, case, scale=big_m_scale)
    model = assemble_milp(prob, cfg, objective or cfg_s.objective)
    assembled = time.perf_counter() - start
    limits = limits or SolveLimits(time_limit=cfg_s.time_limit)
    adapter = get_adapter(adapter or cfg_s.adapter) if adapter is None or isinstance(adapter, str) else adapter
    result = solve(model, adapter, limits, polish_result=cfg_s.polish)
    out = RunOutcome(case, mode, result, prob, model, assembled)
    if result.ok:
        gas_price = None
        if "gas" not in system.markets:
            gas_price = {(m, t): _exogenous_gas_price(case) for m in case.gas.nodes for t in case.time.T}
        out.solution = extract_solution(case, result.values, mode, gas_price)
        if verify:
            out.report = verify_solution(out, tol if tol is not None else cfg_s.tolerance)
    return out


def _exogenous_gas_price(case: MarketCase) -> float:
    return min((s.cost for s in case.gas.suppliers), default=0.0)


def verify_solution(out: RunOutcome, tol: float = 1e-6, fixed_point_tol: float = 1e-4) -> VerificationReport:
    """Residuals and big-M audit, fixed-point re-solves, conservation and (proposed
    mode) the merit-order price bracket."""
    sol = out.solution
    rep = VerificationReport()
    rep.add(*residual_report(sol, out.problem, out.model, tol).checks())
    rep.add(*fixed_point_check(sol, fixed_point_tol).checks())
    cons = conservation_residuals(sol)
    for key in ("power", "gas", "allowance"):
        rep.add(Check(f"conservation:{key}", cons[key] <= tol, cons[key], tol))
    if sol.mode == "proposed":
        rep.add(_merit_check(sol, tol))
    else:
        slack = cons["cap_slack"]
        price = sol.carbon_price[1]
        rep.add(Check("cap:complementarity", slack >= -tol and abs(price * slack) <= tol * max(1.0, price), price * slack,
                      tol, f"cap slack {slack:.6g}, price {price:.6g}"))
    return rep


def merit_price_bracket(requirement: float, case: MarketCase) -> tuple[float, float]:
    """Interval of allowance prices consistent with clearing ``requirement`` tons."""
    scale = case.amount_scale()
    pen = case.penalties.carbon_demand
    ladder = sorted(case.carbon.offers, key=lambda o: (o.cost, o.id))
    cum, lo, hi = 0.0, 0.0, pen
    eps = 1e-7 * max(1.0, requirement)
    for k, o in enumerate(ladder):
        nxt = cum + o.amount * scale
        if requirement <= eps:
            return 0.0, ladder[0].cost if ladder else pen
        if cum + eps < requirement < nxt - eps:
            return o.cost, o.cost
        if abs(requirement - nxt) <= eps:
            upper = ladder[k + 1].cost if k + 1 < len(ladder) else pen
            return o.cost, upper
        cum = nxt
    return lo, hi


def _merit_check(sol: EquilibriumSolution, tol: float) -> Check:
    case = sol.case
    scale = case.amount_scale()
    worst, detail = 0.0, ""
    for tc, emis in sol.emissions_period.items():
        served = sum(sol.served_carbon.get((d.id, tc), 0.0) for d in case.carbon.demands)
        wanted = sum(d.amount for d in case.carbon.demands) * scale
        price = sol.carbon_price[tc]
        if served < wanted - tol:
            lo = hi = case.penalties.carbon_demand
            if served <= tol:
                lo = merit_price_bracket(emis, case)[0]
        else:
            lo, hi = merit_price_bracket(emis + served, case)
        miss = max(lo - price, price - hi, 0.0)
        if miss > worst:
            worst, detail = miss, f"period {tc}: price {price:.6g} outside [{lo:.6g}, {hi:.6g}]"
    return Check("merit-order", worst <= tol * max(1.0, case.penalties.carbon_demand), worst, tol, detail)


# ---------------------------------------------------------------------------
# rows


@dataclass
class StudyRow:
    label: str
    status: str
    verified: bool
    avg_electricity_price: float | None = None
    avg_gas_price: float | None = None
    carbon_price: float | None = None
    total_emission: float | None = None
    avg_hourly_emission: float | None = None
    energy: dict[str, float] = field(default_factory=dict)
    wall_time: float | None = None
    nodes: int | None = None
    failed_checks: str = ""

    def flat(self, timing: bool = True) -> dict[str, object]:
        d = {k: getattr(self, k) for k in ("label", "status", "verified", "avg_electricity_price", "avg_gas_price",
                                           "carbon_price", "total_emission", "avg_hourly_emission")}
        d.update({f"energy_{g}": e for g, e in self.energy.items()})
        if timing:
            d["wall_time"] = self.wall_time
        d.update(nodes=self.nodes, failed_checks=self.failed_checks)
        return d


def average_prices(sol: EquilibriumSolution) -> tuple[float, float, float]:
    """Load-weighted LMP, demand-weighted gas price and mean hourly carbon price."""
    case = sol.case
    T = case.time.T
    w = sum(case.power.load(i, t) for i in case.power.buses for t in T)
    if w > 0:
        e = sum(case.power.load(i, t) * sol.lmp[(i, t)] for i in case.power.buses for t in T) / w
    else:
        e = sum(sol.lmp.values()) / max(len(sol.lmp), 1)
    wg = sum(case.gas.load(m, t) for m in case.gas.nodes for t in T)
    if wg > 0:
        g = sum(case.gas.load(m, t) * sol.gas_price[(m, t)] for m in case.gas.nodes for t in T) / wg
    else:
        g = sum(sol.gas_price.values()) / max(len(sol.gas_price), 1)
    hourly = sol.hourly_carbon_price
    c = sum(hourly.values()) / len(hourly)
    return e, g, c


def row_from_outcome(label: str, out: RunOutcome) -> StudyRow:
    res = out.result
    stats = dict(wall_time=res.stats.get("wall_time"), nodes=res.stats.get("nodes"))
    if out.solution is None:
        return StudyRow(label, res.status, False, **stats)
    sol = out.solution
    e, g, c = average_prices(sol)
    total = sol.total_emission()
    verified = out.report is not None and out.report.passed
    failed = ";".join(ch.name for ch in out.report.failed()) if out.report is not None else ""
    return StudyRow(label, res.status, verified, e, g, c, total, total / sol.case.time.hours,
                    {k: v for k, v in sol.energy().items()}, failed_checks=failed, **stats)


def run_single(case: MarketCase | str | Path, mode: str = "proposed", label: str = "base", **kw
               ) -> tuple[EquilibriumSolution | None, StudyRow, RunOutcome]:
    """Full pipeline on one case (path or object)."""
    if not isinstance(case, MarketCase):
        case = load_case(case)
    report = validate(case)
    if not report.ok:
        raise ModelError("invalid case: " + "; ".join(report.errors))
    out = solve_equilibrium(case, mode, **kw)
    return out.solution, row_from_outcome(label, out), out


# ---------------------------------------------------------------------------
# case transformations


def scale_demand(case: MarketCase, factor: float) -> MarketCase:
    """Multiply every electric load by ``factor``."""
    if factor < 0:
        raise ValueError("demand factor must be nonnegative")
    demand = {b: tuple(p * factor for p in series) for b, series in case.power.demand.items()}
    return replace(case, power=replace(case.power, demand=demand))


def retrofit(case: MarketCase, units: Iterable[str],
             specs: Mapping[str, tuple[float, float]] = DEFAULT_RETROFIT) -> MarketCase:
    """Apply new (cost, emission rate) pairs to ``units``."""
    units = tuple(units)
    known = {g.id for g in case.generators}
    for u in units:
        if u not in known:
            raise KeyError(f"unknown generator {u!r}")
        if u not in specs:
            raise KeyError(f"no retrofit specification for {u!r}")
    gens = tuple(replace(g, cost=specs[g.id][0], emission_rate=specs[g.id][1]) if g.id in units else g
                 for g in case.generators)
    return replace(case, generators=gens)


def set_allowance_total(case: MarketCase, total: float, mode: str = "proposed") -> MarketCase:
    """Proposed mode scales offer amounts to sum to ``total``; cap-and-trade sets the cap."""
    if total <= 0:
        raise ValueError("allowance total must be positive")
    cm = case.carbon
    if mode == "cap-and-trade":
        return replace(case, carbon=replace(cm, cap=float(total)))
    current = sum(o.amount for o in cm.offers)
    if current <= 0:
        raise ValueError("case has no allowance offers to scale")
    f = total / current
    offers = tuple(replace(o, amount=o.amount * f) for o in cm.offers)
    return replace(case, carbon=replace(cm, offers=offers))


# ---------------------------------------------------------------------------
# sweeps


def _row_job(args) -> StudyRow:
    label, case, mode, kw = args
    try:
        out = solve_equilibrium(case, mode, **kw)
    except Exception as exc:  # noqa: BLE001 - a failed row must not abort the sweep
        return StudyRow(label, "error", False, failed_checks=f"{type(exc).__name__}: {exc}")
    return row_from_outcome(label, out)


def _run_rows(jobs: Sequence[tuple[str, MarketCase]], mode: str, workers: int, kw: dict) -> list[StudyRow]:
    args = [(label, case, mode, kw) for label, case in jobs]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_row_job, args))
    return [_row_job(a) for a in args]


def sweep_demand(case: MarketCase, growth: Sequence[float] = DEFAULT_GROWTH, mode: str = "proposed",
                 workers: int = 1, **kw) -> list[StudyRow]:
    """One row per fractional demand growth (0.05 means +5 %)."""
    _finite(growth)
    jobs = [(f"{g * 100:+.0f}%", scale_demand(case, 1.0 + g)) for g in growth]
    return _run_rows(jobs, mode, workers, kw)


def study_retrofit(case: MarketCase, strategies: Sequence[Sequence[str]] = DEFAULT_STRATEGIES,
                   specs: Mapping[str, tuple[float, float]] = DEFAULT_RETROFIT, mode: str = "proposed",
                   workers: int = 1, **kw) -> list[StudyRow]:
    """One row per retrofit set; the empty set is the baseline."""
    if not strategies:
        raise ValueError("no retrofit strategies given")
    jobs = [("+".join(s) if s else "none", retrofit(case, s, specs)) for s in strategies]
    return _run_rows(jobs, mode, workers, kw)


def study_clearing_time(case: MarketCase, scalars: Sequence[int] = DEFAULT_SCALARS, mode: str = "proposed",
                        workers: int = 1, **kw) -> list[StudyRow]:
    """One row per carbon clearing period length (hours)."""
    for k in scalars:
        if int(k) != k or k < 1 or case.time.hours % int(k):
            raise ValueError(f"clearing period {k} does not divide the {case.time.hours} h horizon")
    jobs = [(f"k={int(k)}", case.with_time(int(k))) for k in scalars]
    return _run_rows(jobs, mode, workers, kw)


def study_cap_sweep(case: MarketCase, totals: Sequence[float], mode: str = "proposed", workers: int = 1,
                    **kw) -> list[StudyRow]:
    """One row per allowance total (offer volume or cap, depending on ``mode``)."""
    _finite(totals)
    jobs = [(f"{t:g}", set_allowance_total(case, t, mode)) for t in totals]
    return _run_rows(jobs, mode, workers, kw)


def _finite(values: Sequence[float]) -> None:
    if not values:
        raise ValueError("sweep values are empty")
    for v in values:
        if not (v == v and abs(v) != float("inf")):
            raise ValueError(f"sweep value {v!r} is not finite")


# ---------------------------------------------------------------------------
# output


def rows_to_csv(rows: Sequence[StudyRow], timing: bool = False) -> str:
    """CSV table; wall time is left out by default so reruns are byte-identical."""
    flat = [r.flat(timing) for r in rows]
    cols: list[str] = []
    for d in flat:
        cols.extend(k for k in d if k not in cols)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for d in flat:
        w.writerow({k: _cell(d.get(k)) for k in cols})
    return buf.getvalue()


def _cell(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return "" if v is None else v


def rows_to_json(rows: Sequence[StudyRow], extra: Mapping | None = None) -> str:
    doc = {"rows": [r.flat() for r in rows]}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=False, default=str) + "\n"


def write_rows(rows: Sequence[StudyRow], path: str | Path | None, fmt: str = "csv", extra: Mapping | None = None,
               timing: bool = False) -> str:
    text = rows_to_csv(rows, timing) if fmt == "csv" else rows_to_json(rows, extra)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
