"""Independent checks on a claimed equilibrium.

* ``fixed_point_check`` freezes the coupled quantities at the solution and
  re-solves every market LP on its own.
* ``merit_order_cem`` prices allowances by walking the offer ladder.
* ``brute_force_equilibrium`` enumerates every active-set pattern of a small
  system.
* ``residual_report`` measures stationarity, complementarity and primal
  violations and audits the big-M bounds.
* ``joint_lp_equilibrium`` solves the single cost-minimization LP whose
  optimality conditions coincide with the coupled system.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .case import AllowanceDemand, AllowanceOffer, MarketCase, coupling_map
from .kkt import EquilibriumProblem, EquilibriumSystem, assemble_equilibrium_problem, build_system, derive_kkt
from .lp import LinearProgram, ModelError, Name, fmt_name
from .markets import (build_cem_lp, build_electricity_lp, build_gas_lp, hourly_carbon_prices, line_ids,
                      pipeline_ids, wind_output)
from .milp import BigMConfig, MilpModel
from .solvers import SolverError, solve_lp

BRUTE_FORCE_MAX_PAIRS = 24


# ---------------------------------------------------------------------------
# solution container


@dataclass
class EquilibriumSolution:
    """Primal and price outputs of one equilibrium, keyed by ``(id, t)``."""

    case: MarketCase
    mode: str
    values: dict[Name, float]
    dispatch: dict[tuple[str, int], float]
    angles: dict[tuple[int, int], float]
    served_load: dict[tuple[int, int], float]
    gas_supply: dict[tuple[str, int], float]
    gas_flow: dict[tuple[str, int], float]
    served_gas: dict[tuple[int, int], float]
    allowance_sales: dict[tuple[str, int], float]
    served_carbon: dict[tuple[str, int], float]
    lmp: dict[tuple[int, int], float]
    gas_price: dict[tuple[int, int], float]
    carbon_price: dict[int, float]
    emissions_hourly: dict[int, float]
    emissions_period: dict[int, float]
    objectives: dict[str, float] = field(default_factory=dict)

    @property
    def hourly_carbon_price(self) -> dict[int, float]:
        return hourly_carbon_prices(self.case, self.carbon_price)

    def total_emission(self) -> float:
        return float(sum(self.emissions_hourly.values()))

    def carbon_demand_served(self) -> float:
        return float(sum(self.served_carbon.values()))

    def energy(self) -> dict[str, float]:
        out = {g.id: 0.0 for g in self.case.dispatchable}
        for (gid, _), p in self.dispatch.items():
            out[gid] += p
        return out


def _pick(values: Mapping[Name, float], family: str) -> dict[tuple, float]:
    return {k[1:]: v for k, v in values.items() if k[0] == family}


def extract_solution(case: MarketCase, values: Mapping[Name, float], mode: str = "proposed",
                     gas_price: Mapping[tuple[int, int], float] | None = None) -> EquilibriumSolution:
    """Build an :class:`EquilibriumSolution` from named variable values.

    ``gas_price`` supplies the exogenous gas prices when the gas market is not
    part of the solved system.
    """
    values = dict(values)
    ts = case.time
    dispatch = _pick(values, "P_G")
    hourly = {t: sum(g.emission_rate * dispatch[(g.id, t)] for g in case.dispatchable if g.emission_rate)
              for t in ts.T}
    cmap = coupling_map(ts)
    period = {tc: 0.0 for tc in ts.Tc}
    for t, e in hourly.items():
        period[cmap[t]] += e
    if mode == "proposed":
        carbon = {tc: values[("p_co2", tc)] for tc in ts.Tc}
    else:
        carbon = {tc: values[("p_co2_cap",)] for tc in ts.Tc}
    mu = _pick(values, "mu")
    if not mu and gas_price is not None:
        mu = dict(gas_price)
    sol = EquilibriumSolution(
        case=case, mode=mode, values=values, dispatch=dispatch,
        angles=_pick(values, "theta"), served_load=_pick(values, "P_LD"),
        gas_supply=_pick(values, "F_S"), gas_flow=_pick(values, "F"), served_gas=_pick(values, "F_LD"),
        allowance_sales=_pick(values, "Q_C"), served_carbon=_pick(values, "Q_LD"),
        lmp=_pick(values, "lambda"), gas_price=mu, carbon_price=carbon,
        emissions_hourly=hourly, emissions_period=period,
    )
    sol.objectives = {name: lp.objective(lp.vector(values)) for name, lp in market_lps(sol).items()
                      if all(v.name in values for v in lp.variables)}
    return sol


def market_lps(sol: EquilibriumSolution) -> dict[str, LinearProgram]:
    """Each market LP with the other markets' quantities frozen at ``sol``."""
    case = sol.case
    out = {"electricity": build_electricity_lp(case, sol.gas_price, sol.hourly_carbon_price).lp}
    if sol.gas_supply or sol.mode == "proposed":
        out["gas"] = build_gas_lp(case, sol.dispatch).lp
    if sol.mode == "proposed":
        out["cem"] = build_cem_lp(case, sol.emissions_period).lp
    return out


# ---------------------------------------------------------------------------
# reports


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    detail: str = ""


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, *checks: Check) -> None:
        self.checks.extend(checks)

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "checks": [_jsonable(asdict(c)) for c in self.checks]}


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# fixed point


@dataclass
class MarketCheck:
    market: str
    equilibrium_objective: float
    standalone_objective: float
    objective_gap: float
    primal_violation: float
    dual_objective_gap: float
    stationarity_residual: float
    max_primal_deviation: float
    passed: bool


@dataclass
class FixedPointReport:
    markets: dict[str, MarketCheck]
    tol: float

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.markets.values())

    def checks(self) -> list[Check]:
        return [Check(f"fixed-point:{m.market}", m.passed, max(m.objective_gap, m.dual_objective_gap), self.tol,
                      f"standalone {m.standalone_objective:.10g} vs equilibrium {m.equilibrium_objective:.10g}")
                for m in self.markets.values()]


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def _dual_side(lp: LinearProgram, values: Mapping[Name, float]) -> tuple[float, float]:
    """Dual objective and worst stationarity residual of ``values``' multipliers in ``lp``.

    Missing multipliers (e.g. variable-bound duals) are taken as zero.
    """
    kkt = derive_kkt(lp)
    worst = 0.0
    for st in kkt.stationarity:
        r = st.constant + sum(a * values.get(d, 0.0) for d, a in st.duals.items())
        worst = max(worst, abs(r))
    dual_obj = lp.objective_constant
    dual_obj += sum(r.rhs * values.get(r.tag, 0.0) for r in kkt.equalities)
    dual_obj -= sum(p.constant * values.get(p.dual, 0.0) for p in kkt.pairs)
    return dual_obj, worst


def fixed_point_check(sol: EquilibriumSolution, tol: float = 1e-4, feas_tol: float = 1e-6) -> FixedPointReport:
    """Re-solve every market with the other markets frozen at ``sol``.

    A market passes when the solution is feasible for its LP, the standalone
    optimum matches the solution's objective within ``tol`` (relative), and the
    solution's multipliers are dual feasible with the same objective.
    """
    out: dict[str, MarketCheck] = {}
    for market, lp in market_lps(sol).items():
        x = lp.vector(sol.values)
        eq_obj = lp.objective(x)
        try:
            opt = solve_lp(lp)
        except SolverError as exc:
            raise SolverError(f"{market} re-solve failed: {exc}") from exc
        if not opt.ok:
            raise SolverError(f"{market} re-solve returned {opt.status}")
        act = lp.matrix() @ x
        viol = 0.0
        for row, ax in zip(lp.rows, act):
            if row.sense == "=":
                viol = max(viol, abs(ax - row.rhs))
            elif row.sense == ">=":
                viol = max(viol, row.rhs - ax)
            else:
                viol = max(viol, ax - row.rhs)
        dual_obj, stat = _dual_side(lp, sol.values)
        gap = _rel(eq_obj, opt.objective)
        dgap = _rel(dual_obj, opt.objective)
        scale = max(1.0, float(np.max(np.abs(lp.cost_vector), initial=0.0)))
        dev = max((abs(opt.x[v.name] - sol.values[v.name]) for v in lp.variables), default=0.0)
        ok = gap <= tol and dgap <= tol and viol <= feas_tol and stat <= tol * scale
        out[market] = MarketCheck(market, eq_obj, opt.objective, gap, viol, dgap, stat, dev, ok)
    return FixedPointReport(out, tol)


# ---------------------------------------------------------------------------
# merit order


@dataclass
class MeritOrderResult:
    price: float
    requirement: float
    sold: dict[str, float]
    served: dict[str, float]


def merit_order_cem(emissions: Mapping[int, float] | float, offers: Sequence[AllowanceOffer],
                    demands: Sequence[AllowanceDemand], penalty: float, scale: float = 1.0
                    ) -> dict[int, MeritOrderResult] | MeritOrderResult:
    """Clear the allowance pool by walking the offer ladder in (cost, id) order.

    Generation emissions must be covered; exogenous demands are served while the
    next offer is cheaper than ``penalty``.  The price is the cost of the offer
    that covers the last ton, ``penalty`` when some demand is curtailed, and 0
    when nothing is required.  Amounts are multiplied by ``scale``.
    """
    if not isinstance(emissions, Mapping):
        return _merit_one(float(emissions), offers, demands, penalty, scale)
    return {tc: _merit_one(float(e), offers, demands, penalty, scale) for tc, e in sorted(emissions.items())}


def _merit_one(emission: float, offers, demands, penalty: float, scale: float) -> MeritOrderResult:
    ladder = sorted(offers, key=lambda o: (o.cost, o.id))
    total = sum(o.amount for o in ladder) * scale
    if emission > total + 1e-9:
        raise ValueError(f"emissions {emission:.6g} exceed the offered allowances {total:.6g}")
    cheap = sum(o.amount for o in ladder if o.cost < penalty) * scale
    wanted = sum(d.amount for d in demands) * scale
    served_total = max(0.0, min(wanted, max(cheap, emission) - emission))
    curtailed = wanted - served_total > 1e-9
    requirement = emission + served_total
    sold, left, price = {}, requirement, 0.0
    for o in ladder:
        q = min(o.amount * scale, max(left, 0.0))
        sold[o.id] = q
        if q > 0:
            price = o.cost
        left -= q
    if curtailed:
        price = penalty
    elif requirement <= 0:
        price = 0.0
    served, rest = {}, served_total
    for d in sorted(demands, key=lambda d: d.id):
        served[d.id] = min(d.amount * scale, rest)
        rest -= served[d.id]
    return MeritOrderResult(price, requirement, sold, served)


# ---------------------------------------------------------------------------
# brute force


@dataclass
class BruteForceSolution:
    pattern: int
    z: np.ndarray
    values: dict[Name, float]

    def primal(self, prob: EquilibriumProblem) -> np.ndarray:
        return self.z[prob.primal_mask()]


def brute_force_equilibrium(source: MarketCase | EquilibriumSystem | EquilibriumProblem, mode: str = "proposed",
                            max_pairs: int = BRUTE_FORCE_MAX_PAIRS, tol: float = 1e-8,
                            chunk: int = 4096) -> list[BruteForceSolution]:
    """Every equilibrium found by enumerating which side of each pair is zero.

    Each pattern turns the system into a square linear system; solutions that
    satisfy it and both sign conditions are kept and deduplicated on primal
    values (tolerance ``tol``).  Patterns are processed in batches.
    """
    if isinstance(source, MarketCase):
        source = build_system(source, mode)
    prob = source if isinstance(source, EquilibriumProblem) else assemble_equilibrium_problem(source)
    K = len(prob.pairs)
    if K > max_pairs:
        raise ValueError(f"{K} complementarity pairs exceed the enumeration bound of {max_pairs}")
    A = prob.A_eq.toarray()
    S = prob.S.toarray()
    n, m = prob.n, A.shape[0]
    D = np.zeros((K, n))
    D[np.arange(K), prob.dual_index] = 1.0
    mask = prob.primal_mask()
    scale = max(1.0, float(np.abs(A).max(initial=0.0)), float(np.abs(prob.b_eq).max(initial=0.0)),
                float(np.abs(prob.s0).max(initial=0.0)))
    found: list[BruteForceSolution] = []
    for start in range(0, 2 ** K, chunk):
        pats = np.arange(start, min(start + chunk, 2 ** K))
        bits = ((pats[:, None] >> np.arange(K)[None, :]) & 1).astype(bool)  # True -> slack is zero
        M = np.empty((len(pats), m + K, n))
        M[:, :m, :] = A
        M[:, m:, :] = np.where(bits[:, :, None], S[None, :, :], D[None, :, :])
        r = np.empty((len(pats), m + K))
        r[:, :m] = prob.b_eq
        r[:, m:] = np.where(bits, -prob.s0[None, :], 0.0)
        z = np.einsum("pij,pj->pi", np.linalg.pinv(M), r)
        resid = np.abs(np.einsum("pij,pj->pi", M, z) - r).max(axis=1)
        a = z @ S.T + prob.s0
        b = z[:, prob.dual_index]
        ok = (resid <= 1e-9 * scale) & (a.min(axis=1, initial=0) >= -1e-9 * scale) & \
             (b.min(axis=1, initial=0) >= -1e-9 * scale)
        for p, zp in zip(pats[ok], z[ok]):
            if any(np.max(np.abs(zp[mask] - f.z[mask]), initial=0.0) <= tol for f in found):
                continue
            found.append(BruteForceSolution(int(p), zp, prob.values(zp)))
    return found


# ---------------------------------------------------------------------------
# residuals and big-M audit


@dataclass
class ResidualReport:
    stationarity: float
    complementarity: float
    primal: float
    big_m_flags: list[str]
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.stationarity, self.complementarity, self.primal) <= self.tol and not self.big_m_flags

    def checks(self) -> list[Check]:
        return [
            Check("kkt:stationarity", self.stationarity <= self.tol, self.stationarity, self.tol),
            Check("kkt:complementarity", self.complementarity <= self.tol, self.complementarity, self.tol),
            Check("kkt:primal", self.primal <= self.tol, self.primal, self.tol),
            Check("big-m-audit", not self.big_m_flags, float(len(self.big_m_flags)), 0.0,
                  "; ".join(self.big_m_flags[:5])),
        ]


def big_m_audit(prob: EquilibriumProblem, z: np.ndarray, m_dual: np.ndarray, rel: float = 1e-2) -> list[str]:
    """Names of pairs whose dual sits within ``rel * M`` of its dual-side bound.

    Primal-side bounds are exact, so only the estimated dual side is audited.
    """
    b = z[prob.dual_index]
    hit = np.flatnonzero(b >= (1.0 - rel) * m_dual)
    return [f"{fmt_name(prob.pairs[k].dual)}={b[k]:.6g} near M={m_dual[k]:.6g}" for k in hit]


def residual_report(values: Mapping[Name, float] | EquilibriumSolution, prob: EquilibriumProblem,
                    cfg: BigMConfig | MilpModel | None = None, tol: float = 1e-6) -> ResidualReport:
    """Worst stationarity residual, pair product and primal violation at ``values``."""
    if isinstance(values, EquilibriumSolution):
        values = values.values
    z = np.array([values.get(nm, 0.0) for nm in prob.names])
    r = prob.A_eq @ z - prob.b_eq
    kinds = np.array([e.kind == "stationarity" for e in prob.system.equations])
    stat = float(np.abs(r[kinds]).max(initial=0.0))
    feas = float(np.abs(r[~kinds]).max(initial=0.0))
    a = prob.S @ z + prob.s0
    b = z[prob.dual_index]
    comp = float(np.abs(np.minimum(np.maximum(a, 0), 1e300) * np.maximum(b, 0)).max(initial=0.0))
    primal = max(feas, float(np.maximum(-a, 0).max(initial=0.0)), float(np.maximum(-b, 0).max(initial=0.0)))
    flags: list[str] = []
    if isinstance(cfg, MilpModel):
        flags = big_m_audit(prob, z, cfg.m_dual)
    elif isinstance(cfg, BigMConfig):
        flags = big_m_audit(prob, z, np.array([cfg.dual_m(p) for p in prob.pairs]))
    return ResidualReport(stat, comp, primal, flags, tol)


# ---------------------------------------------------------------------------
# conservation


def conservation_residuals(sol: EquilibriumSolution) -> dict[str, float]:
    """Worst per-hour power and gas imbalance and per-period allowance imbalance."""
    case = sol.case
    ts = case.time
    power = gas = 0.0
    for t in ts.T:
        gen = sum(sol.dispatch[(g.id, t)] for g in case.dispatchable)
        wind = sum(wind_output(case, i, t) for i in case.power.buses)
        load = sum(sol.served_load[(i, t)] for i in case.power.buses)
        power = max(power, abs(gen + wind - load))
        if sol.gas_supply:
            supply = sum(sol.gas_supply[(s.id, t)] for s in case.gas.suppliers)
            served = sum(sol.served_gas[(m, t)] for m in case.gas.nodes)
            burn = sum(g.heat_rate * sol.dispatch[(g.id, t)] for g in case.gas_fired)
            gas = max(gas, abs(supply - served - burn))
    out = {"power": power, "gas": gas}
    if sol.mode == "proposed":
        allow = 0.0
        for tc in ts.Tc:
            sold = sum(sol.allowance_sales[(o.id, tc)] for o in case.carbon.offers)
            served = sum(sol.served_carbon[(d.id, tc)] for d in case.carbon.demands)
            allow = max(allow, abs(sold - served - sol.emissions_period[tc]))
        out["allowance"] = allow
    else:
        used = sol.total_emission()
        out["allowance"] = 0.0
        out["cap_slack"] = _cap_budget(case) - used
    return out


def _cap_budget(case: MarketCase) -> float:
    from .kkt import cap_budget
    return cap_budget(case, case.solver.include_carbon_demands_in_cap)


# ---------------------------------------------------------------------------
# joint LP oracle


@dataclass
class JointLPResult:
    status: str
    objective: float
    values: dict[Name, float]


def joint_lp_equilibrium(source: MarketCase | EquilibriumSystem | EquilibriumProblem,
                         mode: str = "proposed", tol: float = 1e-10) -> JointLPResult:
    """Equilibrium from one LP: minimize the summed base cost over all primal rows.

    Its multipliers are the market prices, so the returned values cover the
    full primal-dual vector of the coupled system.
    """
    if isinstance(source, MarketCase):
        source = build_system(source, mode)
    prob = source if isinstance(source, EquilibriumProblem) else assemble_equilibrium_problem(source)
    mask = prob.primal_mask()
    feas = np.array([e.kind == "feasibility" for e in prob.system.equations])
    cols = np.flatnonzero(mask)
    A = prob.A_eq[np.flatnonzero(feas)][:, cols]
    S = prob.S[:, cols]
    res = linprog(prob.cost[cols], A_ub=-S if S.shape[0] else None, b_ub=prob.s0 if S.shape[0] else None,
                  A_eq=A if A.shape[0] else None, b_eq=prob.b_eq[feas] if A.shape[0] else None,
                  bounds=(None, None), method="highs",
                  options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol})
    if res.status == 2:
        return JointLPResult("infeasible", math.nan, {})
    if res.status != 0:
        raise SolverError(f"joint LP failed: {res.message}")
    values = {prob.names[j]: float(v) for j, v in zip(cols, res.x)}
    if A.shape[0]:
        feas_names = [nm for nm, f in zip(prob.eq_names, feas) if f]
        for name, lam in zip(feas_names, res.eqlin.marginals):
            values[name] = float(lam)
    if S.shape[0]:
        for p, y in zip(prob.pairs, res.ineqlin.marginals):
            values[p.dual] = float(-y)
    return JointLPResult("optimal", float(res.fun) + prob.cost_constant, values)


def total_cost(prob: EquilibriumProblem, values: Mapping[Name, float]) -> float:
    z = np.array([values.get(nm, 0.0) for nm in prob.names])
    return float(prob.cost @ z + prob.cost_constant)
