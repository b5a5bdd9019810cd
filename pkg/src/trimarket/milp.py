"""Big-M mixed-integer form of the equilibrium problem, model export and solve.

Each complementarity pair ``0 <= a _|_ b >= 0`` becomes four rows with one
binary ``phi``::

    a >= 0,   b >= 0,   a <= phi * M_a,   b <= (1 - phi) * M_b

Primal-side bounds ``M_a`` come from the case data and are exact.  Dual-side
bounds ``M_b`` are estimates built from cost coefficients and are audited
after every solve (see ``verify.big_m_audit``).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .case import MarketCase
from .kkt import (ComplementarityPair, EquilibriumProblem, EquilibriumSystem, assemble_equilibrium_problem)
from .lp import ModelError, Name, fmt_name, name_key
from .solvers import SolveLimits, SolveResult, get_adapter

OBJECTIVES = ("feasibility", "min-cost")
M_FLOOR = 1.0


@dataclass
class BigMConfig:
    """Per-family dual bounds, per-pair primal bounds and a global fallback."""

    family_dual: dict[str, float] = field(default_factory=dict)
    pair_primal: dict[Name, float] = field(default_factory=dict)
    fallback: float = 1e4
    eps_comp: float = 1e-6
    twin_cuts: bool = True
    gap_cut: bool = True
    gap_tol: float = 1e-2

    def __post_init__(self):
        if self.eps_comp <= 0:
            raise ValueError("eps_comp must be positive")
        if self.fallback <= 0 or not math.isfinite(self.fallback):
            raise ValueError("fallback M must be positive and finite")
        for key, m in list(self.family_dual.items()) + list(self.pair_primal.items()):
            if not (m > 0 and math.isfinite(m)):
                raise ValueError(f"M for {key!r} must be positive and finite, got {m}")

    def dual_m(self, pair: ComplementarityPair) -> float:
        return self.family_dual.get(pair.family, self.fallback)

    def primal_m(self, pair: ComplementarityPair) -> float:
        return self.pair_primal.get(pair.dual, self.fallback)

    def family_primal(self, family: str) -> float:
        """Largest primal-side M over the pairs of ``family`` (0 if none)."""
        return max((m for d, m in self.pair_primal.items() if d[0] == family), default=0.0)


@dataclass(frozen=True)
class LinearizedPair:
    rows: tuple[tuple[dict, float, float], ...]  # (coeffs incl. "phi", lower, upper)
    binary: Name


def linearize_pair(pair: ComplementarityPair, m_slack: float, m_dual: float | None = None) -> LinearizedPair:
    """Four big-M rows for one pair; coefficients keyed by symbol, binary under ``"phi"``.

    ``a`` is the slack expression (affine), ``b`` the dual variable.
    """
    m_dual = m_slack if m_dual is None else m_dual
    if not (m_slack > 0 and m_dual > 0):
        raise ValueError(f"big-M for {fmt_name(pair.dual)} must be positive")
    a, c = dict(pair.slack), pair.constant
    phi = ("phi",) + pair.dual
    rows = (
        (a, -c, math.inf),                          # a >= 0
        ({pair.dual: 1.0}, 0.0, math.inf),          # b >= 0
        ({**a, phi: -m_slack}, -math.inf, -c),      # a - M_a phi <= 0
        ({pair.dual: 1.0, phi: m_dual}, -math.inf, m_dual),  # b + M_b phi <= M_b
    )
    return LinearizedPair(rows, phi)


# ---------------------------------------------------------------------------
# bound estimation


def _primal_boxes(sys: EquilibriumSystem) -> dict[Name, tuple[float, float]]:
    """Variable boxes implied by single-variable complementarity slacks."""
    box: dict[Name, list[float]] = {}
    for p in sys.pairs:
        if len(p.slack) != 1:
            continue
        (x, a), = p.slack.items()
        lo, hi = box.setdefault(x, [-math.inf, math.inf])
        bound = -p.constant / a
        if a > 0:
            box[x][0] = max(lo, bound)
        else:
            box[x][1] = min(hi, bound)
    return {x: (lo, hi) for x, (lo, hi) in box.items()}


def _twin_tag(dual: Name) -> Name | None:
    fam = dual[0]
    for a, b in (("_min", "_max"), ("_max", "_min")):
        if fam.endswith(a):
            return (fam[: -len(a)] + b,) + dual[1:]
    if fam in ("lb", "ub"):
        return ("ub" if fam == "lb" else "lb",) + dual[1:]
    return None


def _slack_range(pair: ComplementarityPair, box: Mapping[Name, tuple[float, float]]) -> float:
    hi = pair.constant
    for x, a in pair.slack.items():
        lo_x, hi_x = box.get(x, (-math.inf, math.inf))
        hi += a * (hi_x if a > 0 else lo_x)
    return hi


def _primal_bounds(sys: EquilibriumSystem) -> dict[Name, float]:
    box = _primal_boxes(sys)
    by_dual = {p.dual: p for p in sys.pairs}
    out: dict[Name, float] = {}
    for p in sys.pairs:
        m = _slack_range(p, box)
        twin = by_dual.get(_twin_tag(p.dual))
        if twin is not None and all(abs(twin.slack.get(x, 0.0) + a) < 1e-12 for x, a in p.slack.items()) \
                and len(twin.slack) == len(p.slack):
            m = min(m, p.constant + twin.constant)
        if not math.isfinite(m):
            raise ModelError(f"cannot bound slack of {fmt_name(p.dual)}: unbounded symbol in its expression")
        out[p.dual] = max(m, M_FLOOR)
    return out


def estimate_big_m(sys: EquilibriumSystem, case: MarketCase, scale: float | None = None,
                   eps_comp: float = 1e-6) -> BigMConfig:
    """Exact primal-side Ms from the case data; dual-side Ms from cost bounds.

    Dual-side rule: a bound on each market's prices (largest of its curtailment
    penalty and any fully loaded marginal cost) times 2, times the node count
    for network-flow families.  ``scale`` multiplies every dual-side M.
    """
    scale = case.solver.big_m_scale if scale is None else scale
    if scale <= 0:
        raise ValueError("big-M scale must be positive")
    pen = case.penalties
    g_bound = max([pen.gas_load] + [s.cost for s in case.gas.suppliers])
    n_bound = max([pen.carbon_demand] + [r.cost for r in case.carbon.offers])
    e_bound = max([pen.electric_load] + [
        g.cost + (g.heat_rate or 0.0) * g_bound + g.emission_rate * n_bound for g in case.dispatchable])
    n_bus = max(len(case.power.buses), 1)
    n_node = max(len(case.gas.nodes), 1)
    fam = {}
    for f in ("rho1_min", "rho1_max", "rho2_min", "rho2_max", "rho5_min", "rho5_max"):
        fam[f] = 2 * e_bound
    for f in ("rho3_min", "rho3_max"):
        fam[f] = 2 * n_bus * e_bound
    for f in ("phi1_min", "phi1_max", "phi3_min", "phi3_max"):
        fam[f] = 2 * g_bound
    for f in ("phi2_min", "phi2_max"):
        fam[f] = 2 * n_node * g_bound
    for f in ("nu1_min", "nu1_max", "nu2_min", "nu2_max"):
        fam[f] = 2 * n_bound
    etas = [g.emission_rate for g in case.dispatchable if g.emission_rate > 0]
    fam["p_co2_cap"] = 2 * e_bound / min(etas) if etas else 2 * n_bound
    fam = {k: v * scale for k, v in fam.items()}
    fallback = 2 * max(e_bound, g_bound, n_bound) * scale
    return BigMConfig(fam, _primal_bounds(sys), fallback, eps_comp)


# ---------------------------------------------------------------------------
# MILP assembly


@dataclass
class MilpModel:
    """``min c'x`` s.t. ``row_lb <= A x <= row_ub``, ``lb <= x <= ub``; binaries flagged in ``integrality``."""

    names: list[Name]
    row_names: list[Name]
    c: np.ndarray
    A: sp.csr_matrix
    row_lb: np.ndarray
    row_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integrality: np.ndarray
    problem: EquilibriumProblem
    m_slack: np.ndarray
    m_dual: np.ndarray
    objective: str = "feasibility"
    cost_constant: float = 0.0
    eps_comp: float = 1e-6

    @property
    def n_continuous(self) -> int:
        return self.problem.n

    @property
    def n_binary(self) -> int:
        return int(self.integrality.sum())


def complementarity_gap_vector(prob: EquilibriumProblem) -> np.ndarray:
    """Vector ``g`` with ``g @ z == sum_k a_k(z) * b_k(z)`` whenever ``A_eq @ z == b_eq``.

    It is the summed primal-minus-dual objective of the coupled markets; the
    price-times-quantity terms cancel between markets, which leaves it linear.
    Every pair product is nonnegative, so ``g @ z <= 0`` is a valid cut that
    forces complementarity in the continuous relaxation.
    """
    g = prob.cost.copy()
    for k, name in enumerate(prob.eq_names):
        if name in prob.index and prob.system.equations[k].kind == "feasibility":
            g[prob.index[name]] -= prob.b_eq[k]
    np.add.at(g, prob.dual_index, prob.s0)
    return g


def _twin_pairs(pairs: list[ComplementarityPair]) -> list[tuple[int, int]]:
    """Index pairs whose slacks sum to a positive constant, so both cannot be zero."""
    pos = {p.dual: k for k, p in enumerate(pairs)}
    out = []
    for k, p in enumerate(pairs):
        tw = _twin_tag(p.dual)
        j = pos.get(tw) if tw is not None else None
        if j is None or j <= k:
            continue
        q = pairs[j]
        opposite = len(q.slack) == len(p.slack) and all(
            abs(q.slack.get(x, 0.0) + a) < 1e-12 for x, a in p.slack.items())
        if opposite and p.constant + q.constant > 0:
            out.append((k, j))
    return out


def assemble_milp(source: EquilibriumSystem | EquilibriumProblem, cfg: BigMConfig,
                  objective: str = "feasibility") -> MilpModel:
    """Copy feasibility and stationarity rows and add four rows plus one binary per pair.

    Continuous columns come first in the problem's deterministic order, then one
    binary per pair in pair order.
    """
    if objective not in OBJECTIVES:
        raise ModelError(f"unknown objective {objective!r}")
    prob = source if isinstance(source, EquilibriumProblem) else assemble_equilibrium_problem(source)
    n, K = prob.n, len(prob.pairs)
    if prob.A_eq.shape[0] == 0 and K == 0:
        raise ModelError("no constraints")
    m_a = np.array([cfg.primal_m(p) for p in prob.pairs])
    m_b = np.array([cfg.dual_m(p) for p in prob.pairs])
    if np.any(m_a <= 0) or np.any(m_b <= 0):
        raise ModelError("every big-M must be positive")

    S = prob.S.tocsr()
    D = sp.csr_matrix((np.ones(K), (np.arange(K), prob.dual_index)), shape=(K, n))
    I = sp.identity(K, format="csr")
    Z = sp.csr_matrix((K, K))
    A = sp.vstack([
        sp.hstack([prob.A_eq, sp.csr_matrix((prob.A_eq.shape[0], K))]),
        sp.hstack([S, Z]),                       # a >= 0
        sp.hstack([D, Z]),                       # b >= 0
        sp.hstack([S, -sp.diags(m_a) @ I]),      # a - M_a phi <= 0
        sp.hstack([D, sp.diags(m_b) @ I]),       # b + M_b phi <= M_b
    ], format="csr")
    inf = np.full(K, np.inf)
    row_lb = np.concatenate([prob.b_eq, -prob.s0, np.zeros(K), -inf, -inf])
    row_ub = np.concatenate([prob.b_eq, inf, inf, -prob.s0, m_b])
    dual_set = set(prob.dual_index.tolist())
    lb = np.array([0.0 if j in dual_set else -np.inf for j in range(n)] + [0.0] * K)
    ub = np.array([np.inf] * n + [1.0] * K)
    integrality = np.array([0] * n + [1] * K)
    c = np.zeros(n + K)
    if objective == "min-cost":
        c[:n] = prob.cost
    twins = _twin_pairs(prob.pairs) if cfg.twin_cuts else []
    if twins:
        T = sp.csr_matrix((np.ones(2 * len(twins)), (np.repeat(np.arange(len(twins)), 2), np.ravel(twins))),
                          shape=(len(twins), K))
        A = sp.vstack([A, sp.hstack([sp.csr_matrix((len(twins), n)), T])], format="csr")
        row_lb = np.concatenate([row_lb, np.ones(len(twins))])
        row_ub = np.concatenate([row_ub, np.full(len(twins), np.inf)])
    extra_names = []
    if cfg.gap_cut and K:
        g = complementarity_gap_vector(prob)
        A = sp.vstack([A, sp.csr_matrix(np.concatenate([g, np.zeros(K)])[None, :])], format="csr")
        row_lb = np.append(row_lb, -np.inf)
        row_ub = np.append(row_ub, cfg.gap_tol)
        extra_names.append(("gap",))
    binaries = [("phi",) + p.dual for p in prob.pairs]
    row_names = ([("eq",) + tuple(e) for e in prob.eq_names]
                 + [(k,) + p.dual for k in ("slack", "dual", "slack_m", "dual_m") for p in prob.pairs]
                 + [("twin",) + prob.pairs[i].dual for i, _ in twins] + extra_names)
    return MilpModel(prob.names + binaries, row_names, c, A, row_lb, row_ub, lb, ub, integrality, prob,
                     m_a, m_b, objective, prob.cost_constant if objective == "min-cost" else 0.0, cfg.eps_comp)


# ---------------------------------------------------------------------------
# export


def _num(v: float) -> str:
    """Shortest repr that fits the 12-character fixed-MPS number field."""
    if v == int(v) and abs(v) < 1e11:
        return str(int(v))
    s = repr(float(v))
    if len(s) <= 12:
        return s
    for digits in range(12, 0, -1):
        s = f"{v:.{digits}g}"
        if len(s) <= 12:
            return s
    raise ValueError(f"cannot format {v}")  # pragma: no cover


def _row_spec(lo: float, hi: float) -> tuple[str, float, float | None]:
    """MPS row type, rhs and optional range."""
    if lo == hi:
        return "E", lo, None
    if math.isinf(lo):
        return "L", hi, None
    if math.isinf(hi):
        return "G", lo, None
    return "G", lo, hi - lo


def _order(model: MilpModel) -> tuple[list[int], list[int]]:
    cols = sorted(range(len(model.names)), key=lambda j: (int(model.integrality[j]), name_key(model.names[j])))
    rows = sorted(range(len(model.row_names)), key=lambda i: name_key(model.row_names[i]))
    return cols, rows


def _mangled(model: MilpModel):
    cols, rows = _order(model)
    cname = {j: f"C{k + 1:07d}" for k, j in enumerate(cols)}
    rname = {i: f"R{k + 1:07d}" for k, i in enumerate(rows)}
    names = {cname[j]: fmt_name(model.names[j]) for j in cols}
    names.update({rname[i]: fmt_name(model.row_names[i]) for i in rows})
    return cols, rows, cname, rname, names


def _field(s: str, width: int) -> str:
    return s.ljust(width)


def _mps(model: MilpModel) -> tuple[str, dict[str, str]]:
    cols, rows, cname, rname, names = _mangled(model)
    A = model.A.tocsc()
    out = ["NAME          TRIMARKET", "ROWS", " N  COST"]
    specs = {i: _row_spec(model.row_lb[i], model.row_ub[i]) for i in rows}
    out += [f" {specs[i][0]}  {rname[i]}" for i in rows]
    out.append("COLUMNS")
    row_pos = {i: k for k, i in enumerate(rows)}
    in_int = False
    marker = 0
    for j in cols:
        is_int = bool(model.integrality[j])
        if is_int != in_int:
            tag = "'INTORG'" if is_int else "'INTEND'"
            out.append(f"    {_field(f'M{marker:07d}', 10)}'MARKER'                 {tag}")
            marker += 1
            in_int = is_int
        entries = []
        if model.c[j]:
            entries.append(("COST", model.c[j]))
        lo, hi = A.indptr[j], A.indptr[j + 1]
        col = sorted(zip(A.indices[lo:hi], A.data[lo:hi]), key=lambda e: row_pos[e[0]])
        entries += [(rname[i], a) for i, a in col if a]
        if not entries:
            entries.append(("COST", 0.0))
        for r, a in entries:
            out.append(f"    {_field(cname[j], 10)}{_field(r, 10)}{_num(a)}")
    if in_int:
        out.append(f"    {_field(f'M{marker:07d}', 10)}'MARKER'                 'INTEND'")
    out.append("RHS")
    for i in rows:
        rhs = specs[i][1]
        if rhs:
            out.append(f"    {_field('RHS', 10)}{_field(rname[i], 10)}{_num(rhs)}")
    ranged = [i for i in rows if specs[i][2] is not None]
    if ranged:
        out.append("RANGES")
        out += [f"    {_field('RNG', 10)}{_field(rname[i], 10)}{_num(specs[i][2])}" for i in ranged]
    out.append("BOUNDS")
    for j in cols:
        lo, hi = model.lb[j], model.ub[j]
        c = cname[j]
        if model.integrality[j] and lo == 0 and hi == 1:
            out.append(f" UP {_field('BND', 10)}{_field(c, 10)}1")
        elif math.isinf(lo) and math.isinf(hi):
            out.append(f" FR {_field('BND', 10)}{c}")
        else:
            if math.isinf(lo):
                out.append(f" MI {_field('BND', 10)}{c}")
            elif lo != 0:
                out.append(f" LO {_field('BND', 10)}{_field(c, 10)}{_num(lo)}")
            if not math.isinf(hi):
                out.append(f" UP {_field('BND', 10)}{_field(c, 10)}{_num(hi)}")
    out.append("ENDATA")
    return "\n".join(out) + "\n", names


def _lp_terms(pairs) -> str:
    parts = []
    for name, a in pairs:
        parts.append(f"{'-' if a < 0 else '+'} {_num(abs(a))} {name}")
    return " ".join(parts) if parts else "0"


def _lp(model: MilpModel) -> tuple[str, dict[str, str]]:
    cols, rows, cname, rname, names = _mangled(model)
    col_pos = {j: k for k, j in enumerate(cols)}
    A = model.A.tocsr()
    out = ["\\ trimarket equilibrium MILP", "Minimize"]
    obj = [(cname[j], model.c[j]) for j in cols if model.c[j]]
    out.append(f" obj: {_lp_terms(obj)}")
    out.append("Subject To")
    for i in rows:
        lo, hi = A.indptr[i], A.indptr[i + 1]
        terms = sorted(zip(A.indices[lo:hi], A.data[lo:hi]), key=lambda e: col_pos[e[0]])
        expr = _lp_terms([(cname[j], a) for j, a in terms if a])
        rl, ru = model.row_lb[i], model.row_ub[i]
        if rl == ru:
            out.append(f" {rname[i]}: {expr} = {_num(rl)}")
        elif math.isinf(rl):
            out.append(f" {rname[i]}: {expr} <= {_num(ru)}")
        elif math.isinf(ru):
            out.append(f" {rname[i]}: {expr} >= {_num(rl)}")
        else:
            out.append(f" {rname[i]}: {_num(rl)} <= {expr} <= {_num(ru)}")
    out.append("Bounds")
    for j in cols:
        lo, hi = model.lb[j], model.ub[j]
        lo_s = "-inf" if math.isinf(lo) else _num(lo)
        hi_s = "+inf" if math.isinf(hi) else _num(hi)
        if math.isinf(lo) and math.isinf(hi):
            out.append(f" {cname[j]} free")
        else:
            out.append(f" {lo_s} <= {cname[j]} <= {hi_s}")
    binaries = [cname[j] for j in cols if model.integrality[j]]
    if binaries:
        out.append("Binaries")
        out += [f" {b}" for b in binaries]
    out.append("End")
    return "\n".join(out) + "\n", names


def export_model(model: MilpModel, fmt: str = "mps") -> tuple[str, dict[str, str]]:
    """Deterministic fixed-format MPS or LP text plus the ``mangled -> readable`` name map.

    Structured names rarely fit the 8-character MPS fields, so every column and
    row is written as ``C0000001`` / ``R0000001`` in sorted-name order.
    """
    if fmt == "mps":
        return _mps(model)
    if fmt == "lp":
        return _lp(model)
    raise ValueError(f"unknown export format {fmt!r}")


def name_map_text(names: Mapping[str, str]) -> str:
    return "".join(f"{k} {v}\n" for k, v in sorted(names.items()))


# ---------------------------------------------------------------------------
# solve


def _choose_active(model: MilpModel, z: np.ndarray) -> np.ndarray:
    """``True`` where the slack side of a pair is taken as zero."""
    prob = model.problem
    a = prob.S @ z + prob.s0
    b = z[prob.dual_index]
    return np.abs(a) / model.m_slack <= np.abs(b) / model.m_dual


def polish(model: MilpModel, z: np.ndarray, tol: float = 1e-10) -> np.ndarray | None:
    """Fix the zero side of every pair from ``z`` and re-solve the remaining LP exactly.

    Returns ``None`` if the fixed pattern is infeasible.
    """
    prob = model.problem
    slack_zero = _choose_active(model, z)
    K = len(prob.pairs)
    n = prob.n
    S = prob.S.tocsr()
    rows_eq = [prob.A_eq, S[np.flatnonzero(slack_zero)]]
    rhs_eq = [prob.b_eq, -prob.s0[slack_zero]]
    keep = np.flatnonzero(~slack_zero)
    A_ub = -S[keep] if len(keep) else None
    b_ub = prob.s0[keep] if len(keep) else None
    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)
    for k in range(K):
        j = prob.dual_index[k]
        lb[j] = 0.0
        if not slack_zero[k]:
            ub[j] = 0.0
    c = prob.cost if model.objective == "min-cost" else np.zeros(n)
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=sp.vstack(rows_eq, format="csr"), b_eq=np.concatenate(rhs_eq),
                  bounds=np.column_stack([lb, ub]), method="highs",
                  options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol})
    if res.status != 0:
        return None
    return res.x


GAP_RETRY_FACTOR = 1e3


def _relax_gap_row(model: MilpModel, factor: float) -> MilpModel:
    i = model.row_names.index(("gap",))
    row_ub = model.row_ub.copy()
    row_ub[i] = max(row_ub[i], 1e-6) * factor
    return replace(model, row_ub=row_ub)


def solve(model: MilpModel, adapter=None, limits: SolveLimits | None = None, polish_result: bool = True) -> SolveResult:
    """Run the adapter; on success map the continuous part back to named values.

    With ``polish_result`` the binary pattern is turned into an exact LP
    re-solve, which removes the residue left by big-M tolerances.
    """
    adapter = get_adapter(adapter) if adapter is None or isinstance(adapter, str) else adapter
    res = adapter.submit(model, limits)
    if res.status == "infeasible" and ("gap",) in model.row_names:
        # the gap row is a valid cut for any positive bound; an infeasible verdict
        # with it present can be a tolerance artefact, so confirm with a looser bound
        res = adapter.submit(_relax_gap_row(model, GAP_RETRY_FACTOR), limits)
        res.stats["gap_retry"] = True
    if not res.ok:
        return res
    z = np.asarray(res.x[: model.n_continuous], dtype=float)
    polished = False
    if polish_result:
        start = time.perf_counter()
        zp = polish(model, z)
        res.stats["polish_time"] = time.perf_counter() - start
        if zp is not None:
            z = zp
            polished = True
    res.stats["polished"] = polished
    res.values = model.problem.values(z)
    if model.objective == "min-cost":
        res.objective = float(model.problem.cost @ z + model.problem.cost_constant)
    return res
