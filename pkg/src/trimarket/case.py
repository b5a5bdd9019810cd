"""Case description for the coupled electricity / gas / carbon system.

A case is a JSON document with six sections: ``power``, ``gas``, ``carbon``,
``time``, ``penalties`` and ``solver``.  See ``docs/case-format.md`` for the
full schema.  All power quantities are in MW (MWh per hour), gas in Mm3 per
hour, carbon in tons.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Mapping, Sequence

FUEL_KINDS = ("coal", "gas", "clean", "wind")
AMOUNT_BASES = ("per_hour", "per_period")

DEFAULT_PENALTIES = {
    "electric_load": 1000.0,
    "gas_load": 1.0e6,
    "carbon_demand": 1000.0,
}


class CaseError(ValueError):
    """Raised for malformed case documents.

    ``path`` is the dotted field path (``power.generators[2].p_max``) or a
    ``line:col`` location for syntax errors.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class GeneratorSpec:
    id: str
    bus: int
    fuel: str
    p_min: float
    p_max: float
    cost: float
    emission_rate: float = 0.0
    ramp: float | None = None
    heat_rate: float | None = None
    gas_node: int | None = None
    profile: tuple[float, ...] | None = None
    initial_output: float | None = None

    @property
    def is_gas_fired(self) -> bool:
        return self.fuel == "gas"

    @property
    def is_wind(self) -> bool:
        return self.fuel == "wind"


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float
    capacity: float

    @property
    def id(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class PowerNetwork:
    buses: tuple[int, ...]
    reference_bus: int
    lines: tuple[Line, ...]
    demand: Mapping[int, tuple[float, ...]]
    base_mva: float = 100.0

    def load(self, bus: int, t: int) -> float:
        """Demand at ``bus`` in hour ``t`` (1-indexed); zero for buses without load."""
        profile = self.demand.get(bus)
        return 0.0 if profile is None else profile[t - 1]


@dataclass(frozen=True)
class Pipeline:
    from_node: int
    to_node: int
    capacity: float

    @property
    def id(self) -> str:
        return f"{self.from_node}-{self.to_node}"


@dataclass(frozen=True)
class GasSupplier:
    id: str
    node: int
    f_min: float
    f_max: float
    cost: float


@dataclass(frozen=True)
class GasNetwork:
    nodes: tuple[int, ...]
    pipelines: tuple[Pipeline, ...]
    suppliers: tuple[GasSupplier, ...]
    demand: Mapping[int, tuple[float, ...]]

    def load(self, node: int, t: int) -> float:
        profile = self.demand.get(node)
        return 0.0 if profile is None else profile[t - 1]


@dataclass(frozen=True)
class AllowanceOffer:
    id: str
    amount: float
    cost: float


@dataclass(frozen=True)
class AllowanceDemand:
    id: str
    amount: float


@dataclass(frozen=True)
class CarbonMarket:
    """Allowance offers, exogenous allowance demands and the regional cap.

    With ``amount_basis="per_hour"`` every offer, demand and the cap are hourly
    rates: a clearing period of ``k`` hours trades ``k`` times the tabulated
    amount, and the cap-and-trade budget over the horizon is ``cap * hours``.
    With ``"per_period"`` amounts are used as given.
    """

    offers: tuple[AllowanceOffer, ...]
    demands: tuple[AllowanceDemand, ...]
    cap: float | None = None
    amount_basis: str = "per_hour"


@dataclass(frozen=True)
class TimeStructure:
    hours: int
    period_hours: int = 1

    @property
    def n_periods(self) -> int:
        return self.hours // self.period_hours

    @property
    def T(self) -> range:
        return range(1, self.hours + 1)

    @property
    def Tc(self) -> range:
        return range(1, self.n_periods + 1)

    def period_of(self, t: int) -> int:
        return math.ceil(t / self.period_hours)

    def hours_in(self, tc: int) -> range:
        k = self.period_hours
        return range((tc - 1) * k + 1, tc * k + 1)


@dataclass(frozen=True)
class Penalties:
    electric_load: float = DEFAULT_PENALTIES["electric_load"]
    gas_load: float = DEFAULT_PENALTIES["gas_load"]
    carbon_demand: float = DEFAULT_PENALTIES["carbon_demand"]


@dataclass(frozen=True)
class SolverConfig:
    adapter: str | None = None  # None: $TRIMARKET_SOLVER, then scipy
    time_limit: float = 60.0
    tolerance: float = 1e-6
    big_m_scale: float = 1.0
    objective: str = "feasibility"
    polish: bool = True
    include_carbon_demands_in_cap: bool = True
    cap_and_trade_gas_coupling: bool = True


@dataclass(frozen=True)
class MarketCase:
    power: PowerNetwork
    gas: GasNetwork
    carbon: CarbonMarket
    generators: tuple[GeneratorSpec, ...]
    time: TimeStructure
    penalties: Penalties = field(default_factory=Penalties)
    solver: SolverConfig = field(default_factory=SolverConfig)
    name: str = ""
    notes: str = ""

    def generator(self, gid: str) -> GeneratorSpec:
        for g in self.generators:
            if g.id == gid:
                return g
        raise KeyError(gid)

    @property
    def dispatchable(self) -> tuple[GeneratorSpec, ...]:
        return tuple(g for g in self.generators if not g.is_wind)

    @property
    def gas_fired(self) -> tuple[GeneratorSpec, ...]:
        return tuple(g for g in self.generators if g.is_gas_fired)

    @property
    def wind(self) -> tuple[GeneratorSpec, ...]:
        return tuple(g for g in self.generators if g.is_wind)

    def amount_scale(self) -> float:
        """Multiplier turning tabulated carbon amounts into per-period amounts."""
        if self.carbon.amount_basis == "per_hour":
            return float(self.time.period_hours)
        return 1.0

    def with_time(self, period_hours: int) -> "MarketCase":
        return replace(self, time=replace(self.time, period_hours=period_hours))


# ---------------------------------------------------------------------------
# Parsing


def _take(obj: Mapping[str, Any], path: str, allowed: Sequence[str], required: Sequence[str]) -> dict:
    if not isinstance(obj, Mapping):
        raise CaseError("expected an object", path)
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise CaseError(f"unknown field '{unknown[0]}'", path)
    for key in required:
        if key not in obj:
            raise CaseError(f"missing mandatory field '{key}'", path)
    return dict(obj)


def _num(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise CaseError(f"expected a number, got {value!r}", path)
    value = float(value)
    if math.isnan(value):
        raise CaseError("NaN is not allowed", path)
    return value


def _int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, str) and value.lstrip("-").isdigit():
            return int(value)
        raise CaseError(f"expected an integer id, got {value!r}", path)
    return value


def _series(value: Any, path: str) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise CaseError("expected a list of numbers", path)
    return tuple(_num(v, f"{path}[{i}]") for i, v in enumerate(value))


def _profiles(obj: Any, path: str) -> dict[int, tuple[float, ...]]:
    if not isinstance(obj, Mapping):
        raise CaseError("expected an object keyed by id", path)
    return {_int(k, f"{path}.{k}"): _series(v, f"{path}.{k}") for k, v in obj.items()}


def _parse_generator(obj: Any, path: str) -> GeneratorSpec:
    d = _take(
        obj,
        path,
        allowed=("id", "bus", "fuel", "p_min", "p_max", "cost", "emission_rate", "ramp",
                 "heat_rate", "gas_node", "profile", "initial_output"),
        required=("id", "bus", "fuel", "p_max"),
    )
    fuel = d["fuel"]
    if fuel not in FUEL_KINDS:
        raise CaseError(f"fuel must be one of {FUEL_KINDS}, got {fuel!r}", f"{path}.fuel")
    opt = lambda key, conv=_num: None if d.get(key) is None else conv(d[key], f"{path}.{key}")  # noqa: E731
    return GeneratorSpec(
        id=str(d["id"]),
        bus=_int(d["bus"], f"{path}.bus"),
        fuel=fuel,
        p_min=_num(d.get("p_min", 0.0), f"{path}.p_min"),
        p_max=_num(d["p_max"], f"{path}.p_max"),
        cost=_num(d.get("cost", 0.0), f"{path}.cost"),
        emission_rate=_num(d.get("emission_rate", 0.0), f"{path}.emission_rate"),
        ramp=opt("ramp"),
        heat_rate=opt("heat_rate"),
        gas_node=opt("gas_node", _int),
        profile=opt("profile", _series),
        initial_output=opt("initial_output"),
    )


def _parse_power(obj: Any) -> tuple[PowerNetwork, tuple[GeneratorSpec, ...]]:
    d = _take(obj, "power", ("buses", "reference_bus", "lines", "demand", "generators", "base_mva"),
              ("buses", "reference_bus", "lines", "demand", "generators"))
    if not isinstance(d["buses"], list):
        raise CaseError("expected a list of bus ids", "power.buses")
    buses = tuple(_int(b, f"power.buses[{i}]") for i, b in enumerate(d["buses"]))
    if not buses:
        raise CaseError("empty power network", "power.buses")
    lines = []
    for i, ln in enumerate(d["lines"]):
        p = f"power.lines[{i}]"
        ln = _take(ln, p, ("from", "to", "susceptance", "capacity"), ("from", "to", "susceptance", "capacity"))
        lines.append(Line(_int(ln["from"], p + ".from"), _int(ln["to"], p + ".to"),
                          _num(ln["susceptance"], p + ".susceptance"), _num(ln["capacity"], p + ".capacity")))
    gens = tuple(_parse_generator(g, f"power.generators[{i}]") for i, g in enumerate(d["generators"]))
    net = PowerNetwork(
        buses=buses,
        reference_bus=_int(d["reference_bus"], "power.reference_bus"),
        lines=tuple(lines),
        demand=_profiles(d["demand"], "power.demand"),
        base_mva=_num(d.get("base_mva", 100.0), "power.base_mva"),
    )
    return net, gens


def _parse_gas(obj: Any) -> GasNetwork:
    d = _take(obj, "gas", ("nodes", "pipelines", "suppliers", "demand"), ("nodes", "suppliers"))
    nodes = tuple(_int(n, f"gas.nodes[{i}]") for i, n in enumerate(d["nodes"]))
    pipes = []
    for i, pp in enumerate(d.get("pipelines", [])):
        p = f"gas.pipelines[{i}]"
        pp = _take(pp, p, ("from", "to", "capacity"), ("from", "to", "capacity"))
        pipes.append(Pipeline(_int(pp["from"], p + ".from"), _int(pp["to"], p + ".to"), _num(pp["capacity"], p + ".capacity")))
    sups = []
    for i, s in enumerate(d["suppliers"]):
        p = f"gas.suppliers[{i}]"
        s = _take(s, p, ("id", "node", "f_min", "f_max", "cost"), ("id", "node", "f_max", "cost"))
        sups.append(GasSupplier(str(s["id"]), _int(s["node"], p + ".node"), _num(s.get("f_min", 0.0), p + ".f_min"),
                                _num(s["f_max"], p + ".f_max"), _num(s["cost"], p + ".cost")))
    return GasNetwork(nodes, tuple(pipes), tuple(sups), _profiles(d.get("demand", {}), "gas.demand"))


def _parse_carbon(obj: Any) -> CarbonMarket:
    d = _take(obj, "carbon", ("offers", "demands", "cap", "amount_basis"), ("offers",))
    offers = []
    for i, o in enumerate(d["offers"]):
        p = f"carbon.offers[{i}]"
        o = _take(o, p, ("id", "amount", "cost"), ("id", "amount", "cost"))
        offers.append(AllowanceOffer(str(o["id"]), _num(o["amount"], p + ".amount"), _num(o["cost"], p + ".cost")))
    demands = []
    for i, o in enumerate(d.get("demands", [])):
        p = f"carbon.demands[{i}]"
        o = _take(o, p, ("id", "amount"), ("id", "amount"))
        demands.append(AllowanceDemand(str(o["id"]), _num(o["amount"], p + ".amount")))
    basis = d.get("amount_basis", "per_hour")
    if basis not in AMOUNT_BASES:
        raise CaseError(f"amount_basis must be one of {AMOUNT_BASES}", "carbon.amount_basis")
    cap = None if d.get("cap") is None else _num(d["cap"], "carbon.cap")
    return CarbonMarket(tuple(offers), tuple(demands), cap, basis)


def _parse_time(obj: Any) -> TimeStructure:
    d = _take(obj, "time", ("hours", "cem_period_hours"), ("hours",))
    hours = _int(d["hours"], "time.hours")
    k = _int(d.get("cem_period_hours", 1), "time.cem_period_hours")
    if hours < 1 or k < 1:
        raise CaseError("hours and cem_period_hours must be positive", "time")
    return TimeStructure(hours, k)


def _parse_penalties(obj: Any) -> Penalties:
    d = _take(obj, "penalties", tuple(DEFAULT_PENALTIES), ())
    return Penalties(**{k: _num(v, f"penalties.{k}") for k, v in d.items()})


def _parse_solver(obj: Any) -> SolverConfig:
    names = tuple(SolverConfig.__dataclass_fields__)
    d = _take(obj, "solver", names, ())
    defaults = SolverConfig()
    out = {}
    for k, v in d.items():
        ref = getattr(defaults, k)
        if isinstance(ref, bool):
            if not isinstance(v, bool):
                raise CaseError("expected true/false", f"solver.{k}")
            out[k] = v
        elif isinstance(ref, str) or k == "adapter":
            out[k] = None if v is None else str(v)
        else:
            out[k] = _num(v, f"solver.{k}")
    return SolverConfig(**out)


def case_from_dict(doc: Mapping[str, Any]) -> MarketCase:
    d = _take(doc, "", ("name", "notes", "power", "gas", "carbon", "time", "penalties", "solver"),
              ("power", "gas", "carbon", "time"))
    power, gens = _parse_power(d["power"])
    return MarketCase(
        power=power,
        gas=_parse_gas(d["gas"]),
        carbon=_parse_carbon(d["carbon"]),
        generators=gens,
        time=_parse_time(d["time"]),
        penalties=_parse_penalties(d.get("penalties", {})),
        solver=_parse_solver(d.get("solver", {})),
        name=str(d.get("name", "")),
        notes=str(d.get("notes", "")),
    )


def parse_case(text: str) -> MarketCase:
    """Parse a case document.

    Raises
    ------
    CaseError
        On JSON syntax errors (path is ``line:col``), unknown fields, missing
        mandatory sections or ill-typed values.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(exc.msg, f"{exc.lineno}:{exc.colno}") from None
    return case_from_dict(doc)


def load_case(path) -> MarketCase:
    with open(path, encoding="utf-8") as fh:
        return parse_case(fh.read())


def load_fixture(name: str) -> MarketCase:
    """Load a bundled case, e.g. ``load_fixture("case14g8")``."""
    if not name.endswith(".json"):
        name += ".json"
    text = resources.files("trimarket.fixtures").joinpath(name).read_text(encoding="utf-8")
    return parse_case(text)


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def case_to_dict(case: MarketCase) -> dict:
    gens = []
    for g in case.generators:
        gens.append(_drop_none({
            "id": g.id, "bus": g.bus, "fuel": g.fuel, "p_min": g.p_min, "p_max": g.p_max,
            "cost": g.cost, "emission_rate": g.emission_rate, "ramp": g.ramp,
            "heat_rate": g.heat_rate, "gas_node": g.gas_node,
            "profile": None if g.profile is None else list(g.profile),
            "initial_output": g.initial_output,
        }))
    return {
        "name": case.name,
        "notes": case.notes,
        "time": {"hours": case.time.hours, "cem_period_hours": case.time.period_hours},
        "penalties": {
            "electric_load": case.penalties.electric_load,
            "gas_load": case.penalties.gas_load,
            "carbon_demand": case.penalties.carbon_demand,
        },
        "power": {
            "base_mva": case.power.base_mva,
            "buses": list(case.power.buses),
            "reference_bus": case.power.reference_bus,
            "lines": [{"from": ln.from_bus, "to": ln.to_bus, "susceptance": ln.susceptance,
                       "capacity": ln.capacity} for ln in case.power.lines],
            "demand": {str(b): list(p) for b, p in case.power.demand.items()},
            "generators": gens,
        },
        "gas": {
            "nodes": list(case.gas.nodes),
            "pipelines": [{"from": p.from_node, "to": p.to_node, "capacity": p.capacity} for p in case.gas.pipelines],
            "suppliers": [{"id": s.id, "node": s.node, "f_min": s.f_min, "f_max": s.f_max, "cost": s.cost}
                          for s in case.gas.suppliers],
            "demand": {str(n): list(p) for n, p in case.gas.demand.items()},
        },
        "carbon": _drop_none({
            "amount_basis": case.carbon.amount_basis,
            "cap": case.carbon.cap,
            "offers": [{"id": o.id, "amount": o.amount, "cost": o.cost} for o in case.carbon.offers],
            "demands": [{"id": o.id, "amount": o.amount} for o in case.carbon.demands],
        }),
        "solver": _drop_none({k: getattr(case.solver, k) for k in SolverConfig.__dataclass_fields__}),
    }


def serialize_case(case: MarketCase) -> str:
    return json.dumps(case_to_dict(case), indent=2)


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def coupling_map(ts: TimeStructure) -> dict[int, int]:
    """Map each hour ``t`` (1-indexed) to its carbon clearing period ``ceil(t / k)``."""
    if ts.period_hours < 1 or ts.hours % ts.period_hours:
        raise CaseError(f"clearing period of {ts.period_hours} h does not divide a {ts.hours} h horizon", "time")
    return {t: ts.period_of(t) for t in ts.T}


def _connected(buses: Sequence[int], edges: Sequence[tuple[int, int]]) -> set[int]:
    adj: dict[int, list[int]] = {b: [] for b in buses}
    for i, j in edges:
        if i in adj and j in adj:
            adj[i].append(j)
            adj[j].append(i)
    seen = {buses[0]}
    queue = deque([buses[0]])
    while queue:
        for nb in adj[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return seen


def validate(case: MarketCase) -> ValidationReport:
    """Check every structural invariant of ``case``; never raises."""
    rep = ValidationReport()
    err, warn = rep.errors.append, rep.warnings.append
    H = case.time.hours
    if case.time.hours % case.time.period_hours:
        err(f"time: clearing period {case.time.period_hours} h does not divide horizon {H} h")

    pw = case.power
    buses = set(pw.buses)
    if len(buses) != len(pw.buses):
        err("power: duplicate bus ids")
    if pw.reference_bus not in buses:
        err(f"power: reference bus {pw.reference_bus} does not exist")
    for ln in pw.lines:
        if ln.from_bus not in buses or ln.to_bus not in buses:
            err(f"power: line {ln.id} references an unknown bus")
        if ln.from_bus == ln.to_bus:
            err(f"power: line {ln.id} is a self-loop")
        if ln.susceptance <= 0 or ln.capacity < 0:
            err(f"power: line {ln.id} needs positive susceptance and nonnegative capacity")
    for b, prof in pw.demand.items():
        if b not in buses:
            err(f"power: demand given for unknown bus {b}")
        if len(prof) != H:
            err(f"power: demand profile of bus {b} has {len(prof)} entries, expected {H}")
        if any(v < 0 for v in prof):
            err(f"power: negative demand at bus {b}")
    if pw.buses and len(_connected(pw.buses, [(ln.from_bus, ln.to_bus) for ln in pw.lines])) < len(buses):
        warn("power: network is not connected")

    gas = case.gas
    nodes = set(gas.nodes)
    for p in gas.pipelines:
        if p.from_node not in nodes or p.to_node not in nodes:
            err(f"gas: pipeline {p.id} references an unknown node")
        if p.capacity < 0:
            err(f"gas: pipeline {p.id} has negative capacity")
    for s in gas.suppliers:
        if s.node not in nodes:
            err(f"gas: supplier {s.id} at unknown node {s.node}")
        if not 0 <= s.f_min <= s.f_max:
            err(f"gas: supplier {s.id} violates 0 <= f_min <= f_max")
        if s.cost < 0:
            err(f"gas: supplier {s.id} has negative cost")
    for n, prof in gas.demand.items():
        if n not in nodes:
            err(f"gas: demand given for unknown node {n}")
        if len(prof) != H:
            err(f"gas: demand profile of node {n} has {len(prof)} entries, expected {H}")
        if any(v < 0 for v in prof):
            err(f"gas: negative demand at node {n}")

    ids = [g.id for g in case.generators]
    if len(set(ids)) != len(ids):
        err("generators: duplicate ids")
    for g in case.generators:
        if g.bus not in buses:
            err(f"generator {g.id}: unknown bus {g.bus}")
        if not 0 <= g.p_min <= g.p_max:
            err(f"generator {g.id}: violates 0 <= p_min <= p_max")
        if g.ramp is not None and g.ramp < 0:
            err(f"generator {g.id}: negative ramp limit")
        if g.emission_rate < 0:
            err(f"generator {g.id}: negative emission rate")
        if g.is_gas_fired:
            if g.heat_rate is None or g.heat_rate < 0:
                err(f"generator {g.id}: gas-fired unit needs a nonnegative heat rate")
            if g.gas_node is None or g.gas_node not in nodes:
                err(f"generator {g.id}: gas-fired unit needs a valid gas node")
        if g.is_wind and g.profile is not None and len(g.profile) != H:
            err(f"generator {g.id}: wind profile has {len(g.profile)} entries, expected {H}")
        if g.is_wind and g.profile is not None and any(v < 0 for v in g.profile):
            err(f"generator {g.id}: negative wind forecast")

    cm = case.carbon
    for o in cm.offers:
        if o.amount < 0 or o.cost < 0:
            err(f"carbon: offer {o.id} has negative amount or cost")
    for o in cm.demands:
        if o.amount < 0:
            err(f"carbon: demand {o.id} has negative amount")
    if cm.cap is not None:
        if cm.cap < 0:
            err("carbon: negative cap")
        total = sum(o.amount for o in cm.offers)
        if not math.isclose(total, cm.cap, rel_tol=1e-9, abs_tol=1e-9):
            warn(f"carbon: offer amounts sum to {total:g}, cap is {cm.cap:g}")

    pen = case.penalties
    for name in ("electric_load", "gas_load", "carbon_demand"):
        if getattr(pen, name) <= 0:
            err(f"penalties: {name} must be positive")
    return rep
