"""Coupled electricity, natural gas and carbon allowance market equilibria.

Each market is a linear program; their KKT conditions are stacked, coupled
through shared prices and quantities, and solved as one big-M MILP.
"""

from .case import CaseError, MarketCase, case_from_dict, load_case, load_fixture, parse_case, validate
from .kkt import build_system, assemble_equilibrium_problem
from .lp import LinearProgram, ModelError
from .milp import BigMConfig, MilpModel, assemble_milp, estimate_big_m, export_model, solve
from .solvers import SolveLimits, SolveResult, SolverError, get_adapter
from .studies import (StudyRow, run_single, study_cap_sweep, study_clearing_time, study_retrofit,
                      sweep_demand)
from .verify import (EquilibriumSolution, brute_force_equilibrium, extract_solution, fixed_point_check,
                     joint_lp_equilibrium, merit_order_cem, residual_report)

__version__ = "0.1.0"

__all__ = [
    "BigMConfig", "CaseError", "EquilibriumSolution", "LinearProgram", "MarketCase", "MilpModel", "ModelError",
    "SolveLimits", "SolveResult", "SolverError", "StudyRow", "assemble_equilibrium_problem", "assemble_milp",
    "brute_force_equilibrium", "build_system", "case_from_dict", "estimate_big_m", "export_model",
    "extract_solution", "fixed_point_check", "get_adapter", "joint_lp_equilibrium", "load_case", "load_fixture",
    "merit_order_cem", "parse_case", "residual_report", "run_single", "solve", "study_cap_sweep",
    "study_clearing_time", "study_retrofit", "sweep_demand", "validate",
]
