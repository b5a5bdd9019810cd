"""LP builders for the three market operators.

Each builder returns a handle holding the LP plus a record of which objective
coefficients and right-hand sides were computed from another market's
quantities (``cost_links`` / ``rhs_links``).  The KKT coupling step uses those
records to replace the frozen numbers by the other market's variables.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

from .case import MarketCase, coupling_map
from .lp import LinearProgram, ModelError, Name

Link = tuple[Name, float]  # (symbol, factor)
PriceLink = tuple[Name, float, float]  # (symbol, factor, frozen value)


@dataclass
class MarketModel:
    lp: LinearProgram
    case: MarketCase
    # var name -> [(symbol, factor, value)]; the coefficient contains sum(factor * value)
    cost_links: dict[Name, list[PriceLink]] = field(default_factory=dict)
    # row tag -> [(symbol, factor)]; the rhs contains sum(factor * value(symbol))
    rhs_links: dict[Name, list[Link]] = field(default_factory=dict)
    rhs_param: dict[Name, float] = field(default_factory=dict)

    @property
    def market(self) -> str:
        return self.lp.market

    def duals(self, family: str) -> list[Name]:
        return [r.tag for r in self.lp.rows_of(family)]

    def base_cost(self, name: Name) -> float:
        return self.lp.variable(name).cost - sum(f * v for _, f, v in self.cost_links.get(name, ()))

    def base_rhs(self, tag: Name) -> float:
        return self.lp.row(tag).rhs - self.rhs_param.get(tag, 0.0)


class ElectricityModel(MarketModel):
    """Handle for the ISO dispatch LP: ``P_G``, ``theta``, ``P_LD`` and the
    ``lambda``/``rho1..rho5`` dual families."""


class GasModel(MarketModel):
    """Handle for the gas operator LP: ``F_S``, ``F_LD``, ``F`` and ``mu``/``phi1..phi3``."""


class CemModel(MarketModel):
    """Handle for the carbon pool LP: ``Q_C``, ``Q_LD`` and ``p_co2``/``nu1``/``nu2``."""


def line_ids(case: MarketCase) -> list[str]:
    seen: dict[str, int] = defaultdict(int)
    out = []
    for ln in case.power.lines:
        seen[ln.id] += 1
        out.append(ln.id if seen[ln.id] == 1 else f"{ln.id}#{seen[ln.id]}")
    return out


def pipeline_ids(case: MarketCase) -> list[str]:
    seen: dict[str, int] = defaultdict(int)
    out = []
    for p in case.gas.pipelines:
        seen[p.id] += 1
        out.append(p.id if seen[p.id] == 1 else f"{p.id}#{seen[p.id]}")
    return out


def wind_output(case: MarketCase, bus: int, t: int) -> float:
    return sum(g.profile[t - 1] for g in case.wind if g.bus == bus and g.profile is not None)


def _lookup(values: Mapping, key, what: str) -> float:
    try:
        return float(values[key])
    except KeyError:
        raise ModelError(f"missing {what} entry for {key!r}") from None


def build_electricity_lp(case: MarketCase, gas_price: Mapping[tuple[int, int], float],
                         carbon_price: Mapping[int, float]) -> ElectricityModel:
    """DC-network dispatch LP with frozen gas prices ``mu[(node, t)]`` and
    hourly carbon prices ``p_co2[t]``."""
    T = case.time.T
    pw = case.power
    pen = case.penalties.electric_load
    lp = LinearProgram(market="electricity")
    h = ElectricityModel(lp, case)

    for g in case.dispatchable:
        if g.is_gas_fired and g.gas_node is None:
            raise ModelError(f"gas-fired unit {g.id} has no gas node")
        for t in T:
            name = ("P_G", g.id, t)
            links: list[PriceLink] = []
            if g.is_gas_fired:
                mu = _lookup(gas_price, (g.gas_node, t), "gas price")
                links.append((("mu", g.gas_node, t), g.heat_rate, mu))
            if g.emission_rate:
                pc = _lookup(carbon_price, t, "carbon price")
                links.append((("p_co2_h", t), g.emission_rate, pc))
            lp.add_variable(name, cost=g.cost + sum(f * v for _, f, v in links))
            if links:
                h.cost_links[name] = links
    for t in T:
        for i in pw.buses:
            lp.add_variable(("theta", i, t))
    for t in T:
        for i in pw.buses:
            lp.add_variable(("P_LD", i, t), cost=-pen)
            lp.objective_constant += pen * pw.load(i, t)

    lids = line_ids(case)
    for t in T:
        for i in pw.buses:
            row: dict[Name, float] = defaultdict(float)
            for g in case.dispatchable:
                if g.bus == i:
                    row[("P_G", g.id, t)] += 1.0
            row[("P_LD", i, t)] -= 1.0
            for ln in pw.lines:
                k = pw.base_mva * ln.susceptance
                if ln.from_bus == i:
                    row[("theta", i, t)] -= k
                    row[("theta", ln.to_bus, t)] += k
                elif ln.to_bus == i:
                    row[("theta", i, t)] -= k
                    row[("theta", ln.from_bus, t)] += k
            lp.add_constraint(("lambda", i, t), row, "=", -wind_output(case, i, t))
    for g in case.dispatchable:
        for t in T:
            p = ("P_G", g.id, t)
            lp.add_constraint(("rho1_min", g.id, t), {p: 1.0}, ">=", g.p_min)
            lp.add_constraint(("rho1_max", g.id, t), {p: 1.0}, "<=", g.p_max)
    for g in case.dispatchable:
        if g.ramp is None:
            continue
        for t in T:
            p = ("P_G", g.id, t)
            if t == 1:
                if g.initial_output is None:
                    continue
                lp.add_constraint(("rho2_min", g.id, t), {p: 1.0}, ">=", g.initial_output - g.ramp)
                lp.add_constraint(("rho2_max", g.id, t), {p: 1.0}, "<=", g.initial_output + g.ramp)
            else:
                q = ("P_G", g.id, t - 1)
                lp.add_constraint(("rho2_min", g.id, t), {p: 1.0, q: -1.0}, ">=", -g.ramp)
                lp.add_constraint(("rho2_max", g.id, t), {p: 1.0, q: -1.0}, "<=", g.ramp)
    for lid, ln in zip(lids, pw.lines):
        k = pw.base_mva * ln.susceptance
        for t in T:
            flow = {("theta", ln.from_bus, t): k, ("theta", ln.to_bus, t): -k}
            lp.add_constraint(("rho3_min", lid, t), flow, ">=", -ln.capacity)
            lp.add_constraint(("rho3_max", lid, t), flow, "<=", ln.capacity)
    for t in T:
        lp.add_constraint(("rho4", t), {("theta", pw.reference_bus, t): 1.0}, "=", 0.0)
    for t in T:
        for i in pw.buses:
            d = ("P_LD", i, t)
            lp.add_constraint(("rho5_min", i, t), {d: 1.0}, ">=", 0.0)
            lp.add_constraint(("rho5_max", i, t), {d: 1.0}, "<=", pw.load(i, t))
    return h


def build_gas_lp(case: MarketCase, power_dispatch: Mapping[tuple[str, int], float]) -> GasModel:
    """Gas transport LP with generator gas burn ``heat_rate * P_G[(v, t)]`` frozen."""
    T = case.time.T
    gas = case.gas
    pen = case.penalties.gas_load
    lp = LinearProgram(market="gas")
    h = GasModel(lp, case)
    pids = pipeline_ids(case)

    for t in T:
        for s in gas.suppliers:
            lp.add_variable(("F_S", s.id, t), cost=s.cost)
    for t in T:
        for m in gas.nodes:
            lp.add_variable(("F_LD", m, t), cost=-pen)
            lp.objective_constant += pen * gas.load(m, t)
    for t in T:
        for pid in pids:
            lp.add_variable(("F", pid, t))

    for t in T:
        for m in gas.nodes:
            row: dict[Name, float] = defaultdict(float)
            for s in gas.suppliers:
                if s.node == m:
                    row[("F_S", s.id, t)] += 1.0
            for pid, p in zip(pids, gas.pipelines):
                if p.to_node == m:
                    row[("F", pid, t)] += 1.0
                if p.from_node == m:
                    row[("F", pid, t)] -= 1.0
            row[("F_LD", m, t)] -= 1.0
            links: list[Link] = []
            burn = 0.0
            for g in case.gas_fired:
                if g.gas_node == m:
                    links.append((("P_G", g.id, t), g.heat_rate))
                    burn += g.heat_rate * _lookup(power_dispatch, (g.id, t), "dispatch")
            tag = lp.add_constraint(("mu", m, t), row, "=", burn)
            if links:
                h.rhs_links[tag] = links
                h.rhs_param[tag] = burn
    for s in gas.suppliers:
        for t in T:
            f = ("F_S", s.id, t)
            lp.add_constraint(("phi1_min", s.id, t), {f: 1.0}, ">=", s.f_min)
            lp.add_constraint(("phi1_max", s.id, t), {f: 1.0}, "<=", s.f_max)
    for pid, p in zip(pids, gas.pipelines):
        for t in T:
            f = ("F", pid, t)
            lp.add_constraint(("phi2_min", pid, t), {f: 1.0}, ">=", -p.capacity)
            lp.add_constraint(("phi2_max", pid, t), {f: 1.0}, "<=", p.capacity)
    for t in T:
        for m in gas.nodes:
            d = ("F_LD", m, t)
            lp.add_constraint(("phi3_min", m, t), {d: 1.0}, ">=", 0.0)
            lp.add_constraint(("phi3_max", m, t), {d: 1.0}, "<=", gas.load(m, t))
    return h


def build_cem_lp(case: MarketCase, generation_emissions: Mapping[int, float]) -> CemModel:
    """Carbon pool LP given generation emissions per clearing period ``{t_c: tons}``."""
    ts = case.time
    cmap = coupling_map(ts)
    cm = case.carbon
    pen = case.penalties.carbon_demand
    scale = case.amount_scale()
    lp = LinearProgram(market="cem")
    h = CemModel(lp, case)

    for tc in ts.Tc:
        for r in cm.offers:
            lp.add_variable(("Q_C", r.id, tc), cost=r.cost)
    for tc in ts.Tc:
        for o in cm.demands:
            lp.add_variable(("Q_LD", o.id, tc), cost=-pen)
            lp.objective_constant += pen * o.amount * scale

    for tc in ts.Tc:
        row = {("Q_C", r.id, tc): 1.0 for r in cm.offers}
        row.update({("Q_LD", o.id, tc): -1.0 for o in cm.demands})
        emis = _lookup(generation_emissions, tc, "emission aggregate")
        tag = lp.add_constraint(("p_co2", tc), row, "=", emis)
        h.rhs_links[tag] = [(("P_G", g.id, t), g.emission_rate)
                            for t in ts.T if cmap[t] == tc
                            for g in case.dispatchable if g.emission_rate]
        h.rhs_param[tag] = emis
    for tc in ts.Tc:
        for o in cm.demands:
            q = ("Q_LD", o.id, tc)
            lp.add_constraint(("nu1_min", o.id, tc), {q: 1.0}, ">=", 0.0)
            lp.add_constraint(("nu1_max", o.id, tc), {q: 1.0}, "<=", o.amount * scale)
    for tc in ts.Tc:
        for r in cm.offers:
            q = ("Q_C", r.id, tc)
            lp.add_constraint(("nu2_min", r.id, tc), {q: 1.0}, ">=", 0.0)
            lp.add_constraint(("nu2_max", r.id, tc), {q: 1.0}, "<=", r.amount * scale)
    return h


# ---------------------------------------------------------------------------
# helpers for assembling the frozen inputs


def zero_gas_prices(case: MarketCase) -> dict[tuple[int, int], float]:
    return {(m, t): 0.0 for m in case.gas.nodes for t in case.time.T}


def hourly_carbon_prices(case: MarketCase, per_period: Mapping[int, float] | float) -> dict[int, float]:
    """Expand period prices ``{t_c: price}`` (or a scalar) to every hour."""
    cmap = coupling_map(case.time)
    if isinstance(per_period, (int, float)):
        return {t: float(per_period) for t in case.time.T}
    return {t: float(per_period[tc]) for t, tc in cmap.items()}


def emissions_per_period(case: MarketCase, dispatch: Mapping[tuple[str, int], float]) -> dict[int, float]:
    cmap = coupling_map(case.time)
    out = {tc: 0.0 for tc in case.time.Tc}
    for g in case.dispatchable:
        if g.emission_rate:
            for t in case.time.T:
                out[cmap[t]] += g.emission_rate * float(dispatch[(g.id, t)])
    return out
