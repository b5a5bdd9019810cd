"""Solver back ends: an LP helper and the MILP adapter contract.

An adapter is any object with ``submit(model, limits) -> SolveResult``.  The
default adapter uses :func:`scipy.optimize.milp` (HiGHS).  A ``highspy``
adapter is available when that package is installed; it exposes HiGHS'
tolerances directly.  ``TRIMARKET_SOLVER`` selects the default by name.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .lp import LinearProgram, Name

if TYPE_CHECKING:
    from .milp import MilpModel

STATUSES = ("optimal", "feasible", "infeasible", "timeout", "error")


class SolverError(RuntimeError):
    pass


@dataclass
class SolveLimits:
    time_limit: float = 60.0
    mip_rel_gap: float = 1e-6
    feasibility_tol: float = 1e-9
    node_limit: int | None = None


@dataclass
class SolveResult:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    stats: dict[str, Any] = field(default_factory=dict)
    values: dict[Name, float] | None = None

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")


# ---------------------------------------------------------------------------
# LP


@dataclass
class LPSolution:
    status: str
    objective: float
    x: dict[Name, float]
    duals: dict[Name, float]

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def solve_lp(lp: LinearProgram, tol: float = 1e-9) -> LPSolution:
    """Solve ``lp`` with HiGHS; multipliers follow the ``>=``-normalized convention
    (inequality duals nonnegative, equality duals equal ``d obj / d rhs``)."""
    A = lp.matrix().tocsr()
    ub_rows = [i for i, r in enumerate(lp.rows) if r.sense != "="]
    eq_rows = [i for i, r in enumerate(lp.rows) if r.sense == "="]
    sign = np.array([1.0 if lp.rows[i].sense == "<=" else -1.0 for i in ub_rows])
    kwargs: dict[str, Any] = {}
    if ub_rows:
        kwargs["A_ub"] = sp.diags(sign) @ A[ub_rows]
        kwargs["b_ub"] = sign * np.array([lp.rows[i].rhs for i in ub_rows])
    if eq_rows:
        kwargs["A_eq"] = A[eq_rows]
        kwargs["b_eq"] = np.array([lp.rows[i].rhs for i in eq_rows])
    bounds = [(None if np.isinf(v.lower) else v.lower, None if np.isinf(v.upper) else v.upper)
              for v in lp.variables]
    res = linprog(lp.cost_vector, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol}, **kwargs)
    if res.status == 2:
        return LPSolution("infeasible", float("nan"), {}, {})
    if res.status == 3:
        return LPSolution("unbounded", float("-inf"), {}, {})
    if res.status != 0:
        raise SolverError(f"LP solve failed: {res.message}")
    x = {v.name: float(val) for v, val in zip(lp.variables, res.x)}
    duals: dict[Name, float] = {}
    if ub_rows:
        for i, m in zip(ub_rows, res.ineqlin.marginals):
            duals[lp.rows[i].tag] = float(-m)
    if eq_rows:
        for i, m in zip(eq_rows, res.eqlin.marginals):
            duals[lp.rows[i].tag] = float(m)
    return LPSolution("optimal", float(res.fun) + lp.objective_constant, x, duals)


# ---------------------------------------------------------------------------
# MILP adapters


class ScipyMilpAdapter:
    """HiGHS through :func:`scipy.optimize.milp`."""

    name = "scipy"

    def submit(self, model: "MilpModel", limits: SolveLimits | None = None) -> SolveResult:
        limits = limits or SolveLimits()
        options: dict[str, Any] = {"time_limit": limits.time_limit, "mip_rel_gap": limits.mip_rel_gap,
                                   "presolve": True}
        if limits.node_limit is not None:
            options["node_limit"] = limits.node_limit
        start = time.perf_counter()
        res = milp(
            c=model.c,
            constraints=LinearConstraint(model.A, model.row_lb, model.row_ub),
            integrality=model.integrality,
            bounds=Bounds(model.lb, model.ub),
            options=options,
        )
        wall = time.perf_counter() - start
        stats = {"adapter": self.name, "wall_time": wall, "nodes": getattr(res, "mip_node_count", None),
                 "message": res.message}
        if res.status == 0:
            return SolveResult("optimal", res.x, float(res.fun), stats)
        if res.status == 1:
            if res.x is not None:
                return SolveResult("feasible", res.x, float(res.fun), stats)
            return SolveResult("timeout", stats=stats)
        if res.status == 2:
            return SolveResult("infeasible", stats=stats)
        return SolveResult("error", stats=stats)


class HighspyAdapter:
    """HiGHS through its own Python bindings (optional dependency)."""

    name = "highspy"

    def __init__(self, mip_feasibility_tolerance: float = 1e-9):
        try:
            import highspy  # noqa: F401
        except ImportError as exc:  # pragma: no cover - depends on environment
            raise SolverError("highspy is not installed") from exc
        self.mip_feasibility_tolerance = mip_feasibility_tolerance

    def submit(self, model: "MilpModel", limits: SolveLimits | None = None) -> SolveResult:
        import highspy

        limits = limits or SolveLimits()
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("time_limit", float(limits.time_limit))
        h.setOptionValue("mip_rel_gap", float(limits.mip_rel_gap))
        h.setOptionValue("mip_feasibility_tolerance", self.mip_feasibility_tolerance)
        h.setOptionValue("primal_feasibility_tolerance", 1e-9)
        inf = highspy.kHighsInf
        lp = highspy.HighsLp()
        A = model.A.tocsc()
        lp.num_col_ = A.shape[1]
        lp.num_row_ = A.shape[0]
        lp.col_cost_ = np.asarray(model.c, dtype=float)
        lp.col_lower_ = np.where(np.isinf(model.lb), -inf, model.lb)
        lp.col_upper_ = np.where(np.isinf(model.ub), inf, model.ub)
        lp.row_lower_ = np.where(np.isinf(model.row_lb), -inf, model.row_lb)
        lp.row_upper_ = np.where(np.isinf(model.row_ub), inf, model.row_ub)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        lp.integrality_ = [highspy.HighsVarType.kInteger if v else highspy.HighsVarType.kContinuous
                           for v in model.integrality]
        h.passModel(lp)
        start = time.perf_counter()
        h.run()
        wall = time.perf_counter() - start
        status = h.getModelStatus()
        info = h.getInfo()
        stats = {"adapter": self.name, "wall_time": wall, "nodes": info.mip_node_count,
                 "message": h.modelStatusToString(status)}
        ms = highspy.HighsModelStatus
        has_sol = info.primal_solution_status == 2
        x = np.array(h.getSolution().col_value) if has_sol else None
        if status == ms.kOptimal:
            return SolveResult("optimal", x, info.objective_function_value, stats)
        if status == ms.kInfeasible:
            return SolveResult("infeasible", stats=stats)
        if status in (ms.kTimeLimit, ms.kIterationLimit, ms.kSolutionLimit):
            if has_sol:
                return SolveResult("feasible", x, info.objective_function_value, stats)
            return SolveResult("timeout", stats=stats)
        return SolveResult("error", stats=stats)


ADAPTERS: Mapping[str, type] = {"scipy": ScipyMilpAdapter, "highspy": HighspyAdapter}


def get_adapter(name: str | None = None):
    """Adapter by name; ``None`` reads ``TRIMARKET_SOLVER`` and falls back to scipy."""
    name = name or os.environ.get("TRIMARKET_SOLVER") or "scipy"
    try:
        return ADAPTERS[name]()
    except KeyError:
        raise SolverError(f"unknown solver adapter {name!r}; choose from {sorted(ADAPTERS)}") from None
