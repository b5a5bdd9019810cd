"""Optimality systems of the market LPs and their coupling into one equilibrium system.

Sign convention: every inequality row is first written as ``a'x - b >= 0``
with multiplier ``y >= 0``; equality rows ``e'x = d`` carry a free multiplier.
Stationarity of ``min c'x`` then reads ``c - A'y - E'lambda = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .case import MarketCase, TimeStructure, coupling_map
from .lp import LinearProgram, ModelError, Name, fmt_name, name_key
from .markets import CemModel, ElectricityModel, GasModel, MarketModel

MODES = ("proposed", "cap-and-trade")


@dataclass
class StationarityEquation:
    """``constant + sum(duals[d] * d) + sum(prices[s] * s) = 0`` for one primal variable."""

    variable: Name
    duals: dict[Name, float]
    constant: float
    prices: dict[Name, float] = field(default_factory=dict)


@dataclass
class ComplementarityPair:
    """``0 <= sum(slack[x] * x) + constant  _|_  dual >= 0``."""

    dual: Name
    slack: dict[Name, float]
    constant: float
    market: str = ""

    @property
    def family(self) -> str:
        return self.dual[0]


@dataclass
class FeasibilityRow:
    tag: Name
    coeffs: dict[Name, float]
    rhs: float


@dataclass
class KKTSystem:
    market: str
    primals: list[Name]
    stationarity: list[StationarityEquation]
    pairs: list[ComplementarityPair]
    equalities: list[FeasibilityRow]

    @property
    def free_duals(self) -> list[Name]:
        return [r.tag for r in self.equalities]


def derive_kkt(lp: LinearProgram) -> KKTSystem:
    """Stationarity equations, one complementarity pair per inequality row and
    the equality rows of ``lp``.

    Finite variable bounds are treated as extra inequality rows tagged
    ``("lb", *name)`` / ``("ub", *name)``.
    """
    stat = {v.name: StationarityEquation(v.name, {}, v.cost) for v in lp.variables}
    names = [v.name for v in lp.variables]
    pairs, eqs = [], []
    for row in lp.rows:
        if not row.tag:
            raise ModelError("untagged row")
        coeffs = {names[j]: a for j, a in row.coeffs}
        if row.sense == "=":
            eqs.append(FeasibilityRow(row.tag, coeffs, row.rhs))
            for x, a in coeffs.items():
                stat[x].duals[row.tag] = -a
            continue
        sign = 1.0 if row.sense == ">=" else -1.0
        slack = {x: sign * a for x, a in coeffs.items()}
        pairs.append(ComplementarityPair(row.tag, slack, -sign * row.rhs, lp.market))
        for x, a in slack.items():
            stat[x].duals[row.tag] = -a
    for v in lp.variables:
        if math.isfinite(v.lower):
            tag = ("lb",) + v.name
            pairs.append(ComplementarityPair(tag, {v.name: 1.0}, -v.lower, lp.market))
            stat[v.name].duals[tag] = -1.0
        if math.isfinite(v.upper):
            tag = ("ub",) + v.name
            pairs.append(ComplementarityPair(tag, {v.name: -1.0}, v.upper, lp.market))
            stat[v.name].duals[tag] = 1.0
    return KKTSystem(lp.market, names, [stat[n] for n in names], pairs, eqs)


# ---------------------------------------------------------------------------
# coupled system


@dataclass(frozen=True)
class CouplingLink:
    kind: str  # shared-primal | emission-into-balance | price-into-objective | price-time-expansion
    source: Name
    target: Name


@dataclass
class VarInfo:
    kind: str  # primal | dual
    market: str
    sign: str  # free | nonneg


@dataclass
class LinearEquation:
    """``sum(coeffs[z] * z) = rhs``."""

    name: Name
    coeffs: dict[Name, float]
    rhs: float
    kind: str  # feasibility | stationarity
    market: str


@dataclass
class EquilibriumSystem:
    mode: str
    time: TimeStructure
    variables: dict[Name, VarInfo]
    equations: list[LinearEquation]
    pairs: list[ComplementarityPair]
    links: list[CouplingLink]
    cost: dict[Name, float]
    cost_constant: float
    markets: dict[str, MarketModel] = field(default_factory=dict)

    def links_of(self, kind: str) -> list[CouplingLink]:
        return [ln for ln in self.links if ln.kind == kind]

    def stationarity(self) -> list[LinearEquation]:
        return [e for e in self.equations if e.kind == "stationarity"]

    def feasibility(self) -> list[LinearEquation]:
        return [e for e in self.equations if e.kind == "feasibility"]

    def to_text(self) -> str:
        return system_text(self)


def _add_market(sys_vars: dict[Name, VarInfo], kkt: KKTSystem) -> None:
    for x in kkt.primals:
        if x in sys_vars:
            raise ModelError(f"variable {fmt_name(x)} declared by two markets")
        sys_vars[x] = VarInfo("primal", kkt.market, "free")
    for r in kkt.equalities:
        sys_vars[r.tag] = VarInfo("dual", kkt.market, "free")
    for p in kkt.pairs:
        sys_vars[p.dual] = VarInfo("dual", kkt.market, "nonneg")


def _stationarity_rows(model: MarketModel, kkt: KKTSystem, price_map) -> list[LinearEquation]:
    out = []
    for st in kkt.stationarity:
        coeffs = dict(st.duals)
        const = st.constant
        for sym, factor, value in model.cost_links.get(st.variable, []):
            target = price_map(sym)
            if target is None:
                continue  # price stays frozen at its numeric value
            const -= factor * value
            coeffs[target] = coeffs.get(target, 0.0) + factor
        out.append(LinearEquation(("stat",) + st.variable, coeffs, -const, "stationarity", kkt.market))
    return out


def _feasibility_rows(model: MarketModel, kkt: KKTSystem, couple: bool) -> list[LinearEquation]:
    out = []
    for r in kkt.equalities:
        coeffs = dict(r.coeffs)
        rhs = r.rhs
        if couple and r.tag in model.rhs_links:
            rhs = model.base_rhs(r.tag)
            for sym, factor in model.rhs_links[r.tag]:
                coeffs[sym] = coeffs.get(sym, 0.0) - factor
        out.append(LinearEquation(r.tag, coeffs, rhs, "feasibility", kkt.market))
    return out


def _base_cost(models: Iterable[MarketModel]) -> tuple[dict[Name, float], float]:
    cost, const = {}, 0.0
    for m in models:
        const += m.lp.objective_constant
        for v in m.lp.variables:
            c = m.base_cost(v.name)
            if c:
                cost[v.name] = c
    return cost, const


def _check_time(ts: TimeStructure, *models: MarketModel) -> None:
    for m in models:
        if m.case.time != ts:
            raise ModelError(f"time structure of the {m.market} model differs from the coupling time structure")


def couple_markets(e: ElectricityModel, g: GasModel, c: CemModel, ts: TimeStructure) -> EquilibriumSystem:
    """Joint optimality system of the three operators.

    Gas prices and the carbon price enter the electricity stationarity
    equations as the gas and carbon duals; dispatch enters the gas and
    allowance balances as the electricity primal.  Hourly carbon prices map
    to the clearing period containing the hour.
    """
    _check_time(ts, e, g, c)
    cmap = coupling_map(ts)
    ke, kg, kc = derive_kkt(e.lp), derive_kkt(g.lp), derive_kkt(c.lp)
    variables: dict[Name, VarInfo] = {}
    for k in (ke, kg, kc):
        _add_market(variables, k)

    def price_map(sym: Name) -> Name:
        if sym[0] == "p_co2_h":
            return ("p_co2", cmap[sym[1]])
        return sym

    eqs = (_feasibility_rows(e, ke, True) + _feasibility_rows(g, kg, True) + _feasibility_rows(c, kc, True)
           + _stationarity_rows(e, ke, price_map) + _stationarity_rows(g, kg, price_map)
           + _stationarity_rows(c, kc, price_map))
    links = []
    for gen in e.case.gas_fired:
        for t in ts.T:
            links.append(CouplingLink("shared-primal", ("P_G", gen.id, t), ("mu", gen.gas_node, t)))
    for tag, lks in c.rhs_links.items():
        for sym, _ in lks:
            links.append(CouplingLink("emission-into-balance", sym, tag))
    for var, lks in e.cost_links.items():
        for sym, _, _ in lks:
            links.append(CouplingLink("price-into-objective", price_map(sym), var))
    for t in ts.T:
        links.append(CouplingLink("price-time-expansion", ("p_co2_h", t), ("p_co2", cmap[t])))
    cost, const = _base_cost((e, g, c))
    return EquilibriumSystem("proposed", ts, variables, eqs, ke.pairs + kg.pairs + kc.pairs, links,
                             cost, const, {"electricity": e, "gas": g, "cem": c})


def cap_budget(case: MarketCase, include_demands: bool = True) -> float:
    """Allowance budget left for generation under cap-and-trade."""
    if case.carbon.cap is None:
        raise ModelError("cap-and-trade mode needs carbon.cap")
    hours = case.time.hours if case.carbon.amount_basis == "per_hour" else 1
    budget = case.carbon.cap * hours
    if include_demands:
        budget -= sum(o.amount for o in case.carbon.demands) * hours
    return budget


def build_cap_and_trade_system(e: ElectricityModel, g: GasModel | None, case: MarketCase, ts: TimeStructure,
                               include_demands: bool = True) -> EquilibriumSystem:
    """Electricity (and optionally gas) optimality with a single horizon-wide cap.

    The carbon market is replaced by ``0 <= budget - sum(eta * P_G) _|_ p_co2 >= 0``
    with one price applied to every hour.  Passing ``g=None`` keeps the
    electricity model's frozen gas prices instead of coupling the gas market.
    """
    models = (e,) if g is None else (e, g)
    _check_time(ts, *models)
    budget = cap_budget(case, include_demands)
    ke = derive_kkt(e.lp)
    kg = derive_kkt(g.lp) if g is not None else None
    variables: dict[Name, VarInfo] = {}
    _add_market(variables, ke)
    if kg is not None:
        _add_market(variables, kg)
    price = ("p_co2_cap",)
    variables[price] = VarInfo("dual", "cap", "nonneg")

    def price_map(sym: Name) -> Name | None:
        if sym[0] == "p_co2_h":
            return price
        return sym if kg is not None else None

    eqs = _feasibility_rows(e, ke, True) + _stationarity_rows(e, ke, price_map)
    pairs = list(ke.pairs)
    if kg is not None:
        eqs += _feasibility_rows(g, kg, True) + _stationarity_rows(g, kg, price_map)
        pairs += kg.pairs
    slack = {("P_G", gen.id, t): -gen.emission_rate
             for gen in case.dispatchable if gen.emission_rate for t in ts.T}
    pairs.append(ComplementarityPair(price, slack, budget, "cap"))
    links = [CouplingLink("price-time-expansion", ("p_co2_h", t), price) for t in ts.T]
    if kg is not None:
        links += [CouplingLink("shared-primal", ("P_G", gen.id, t), ("mu", gen.gas_node, t))
                  for gen in case.gas_fired for t in ts.T]
    for var, lks in e.cost_links.items():
        for sym, _, _ in lks:
            tgt = price_map(sym)
            if tgt is not None:
                links.append(CouplingLink("price-into-objective", tgt, var))
    cost, const = _base_cost(models)
    markets = {"electricity": e} if g is None else {"electricity": e, "gas": g}
    return EquilibriumSystem("cap-and-trade", ts, variables, eqs, pairs, links, cost, const, markets)


# ---------------------------------------------------------------------------
# closed problem


class DanglingSymbolError(ModelError):
    def __init__(self, dangling: list[tuple[Name, str, Name]]):
        self.dangling = dangling
        sym, market, eq = dangling[0]
        super().__init__(f"{len(dangling)} undeclared symbol reference(s), first: {fmt_name(sym)} "
                         f"in {market} equation {fmt_name(eq)}")


def dangling_symbols(sys: EquilibriumSystem) -> list[tuple[Name, str, Name]]:
    out = []
    for eq in sys.equations:
        out.extend((s, eq.market, eq.name) for s in eq.coeffs if s not in sys.variables)
    for p in sys.pairs:
        if p.dual not in sys.variables:
            out.append((p.dual, p.market, p.dual))
        out.extend((s, p.market, p.dual) for s in p.slack if s not in sys.variables)
    return out


@dataclass
class EquilibriumProblem:
    """Matrix form of a closed equilibrium system.

    ``A_eq @ z == b_eq`` holds feasibility and stationarity rows; pair ``k``
    has slack ``S[k] @ z + s0[k]`` and multiplier ``z[dual_index[k]]``.
    """

    system: EquilibriumSystem
    names: list[Name]
    index: dict[Name, int]
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    eq_names: list[Name]
    S: sp.csr_matrix
    s0: np.ndarray
    dual_index: np.ndarray
    cost: np.ndarray
    cost_constant: float

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def pairs(self) -> list[ComplementarityPair]:
        return self.system.pairs

    def primal_mask(self) -> np.ndarray:
        return np.array([self.system.variables[n].kind == "primal" for n in self.names])

    def values(self, z: np.ndarray) -> dict[Name, float]:
        return {n: float(v) for n, v in zip(self.names, z)}


def assemble_equilibrium_problem(sys: EquilibriumSystem) -> EquilibriumProblem:
    """Check closure and lay the system out as sparse matrices (constant objective)."""
    bad = dangling_symbols(sys)
    if bad:
        raise DanglingSymbolError(bad)
    names = sorted(sys.variables, key=name_key)
    index = {n: i for i, n in enumerate(names)}
    n = len(names)

    def build(rows: list[dict[Name, float]]) -> sp.csr_matrix:
        data, ri, ci = [], [], []
        for r, coeffs in enumerate(rows):
            for s, a in coeffs.items():
                if a:
                    ri.append(r)
                    ci.append(index[s])
                    data.append(a)
        return sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n))

    A = build([e.coeffs for e in sys.equations])
    S = build([p.slack for p in sys.pairs])
    cost = np.zeros(n)
    for s, c in sys.cost.items():
        cost[index[s]] = c
    return EquilibriumProblem(
        system=sys, names=names, index=index,
        A_eq=A, b_eq=np.array([e.rhs for e in sys.equations]), eq_names=[e.name for e in sys.equations],
        S=S, s0=np.array([p.constant for p in sys.pairs]),
        dual_index=np.array([index[p.dual] for p in sys.pairs], dtype=int),
        cost=cost, cost_constant=sys.cost_constant,
    )


def _expr(coeffs: dict[Name, float]) -> str:
    if not coeffs:
        return "0"
    parts = []
    for s in sorted(coeffs, key=name_key):
        a = coeffs[s]
        parts.append(f"{'-' if a < 0 else '+'} {abs(a):.10g}*{fmt_name(s)}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def system_text(sys: EquilibriumSystem) -> str:
    """One equation per line, for auditing the assembled system by eye."""
    out = [f"# equilibrium system, mode={sys.mode}"]
    for eq in sys.equations:
        out.append(f"[{eq.market}:{eq.kind}] {fmt_name(eq.name)}: {_expr(eq.coeffs)} = {eq.rhs:.10g}")
    for p in sys.pairs:
        const = f" {'-' if p.constant < 0 else '+'} {abs(p.constant):.10g}" if p.constant else ""
        out.append(f"[{p.market}:pair] 0 <= {_expr(p.slack)}{const} _|_ {fmt_name(p.dual)} >= 0")
    for ln in sys.links:
        out.append(f"[link:{ln.kind}] {fmt_name(ln.source)} -> {fmt_name(ln.target)}")
    return "\n".join(out) + "\n"


def build_system(case: MarketCase, mode: str = "proposed") -> EquilibriumSystem:
    """Build the three market LPs with placeholder prices and couple them."""
    from .markets import build_cem_lp, build_electricity_lp, build_gas_lp, zero_gas_prices

    if mode not in MODES:
        raise ModelError(f"unknown mode {mode!r}")
    ts = case.time
    zero_dispatch = {(gen.id, t): 0.0 for gen in case.dispatchable for t in ts.T}
    e = build_electricity_lp(case, zero_gas_prices(case), {t: 0.0 for t in ts.T})
    if mode == "proposed":
        g = build_gas_lp(case, zero_dispatch)
        c = build_cem_lp(case, {tc: 0.0 for tc in ts.Tc})
        return couple_markets(e, g, c, ts)
    if case.solver.cap_and_trade_gas_coupling:
        g = build_gas_lp(case, zero_dispatch)
    else:
        # without a gas market, gas-fired units buy at the cheapest supplier's offer
        g = None
        price = min((s.cost for s in case.gas.suppliers), default=0.0)
        e = build_electricity_lp(case, {k: price for k in zero_gas_prices(case)}, {t: 0.0 for t in ts.T})
    return build_cap_and_trade_system(e, g, case, ts, case.solver.include_carbon_demands_in_cap)
