import pytest

from trimarket.lp import LinearProgram
from trimarket.solvers import ADAPTERS, ScipyMilpAdapter, SolverError, get_adapter, solve_lp


def test_adapter_lookup(monkeypatch):
    monkeypatch.delenv("TRIMARKET_SOLVER", raising=False)
    assert isinstance(get_adapter(), ScipyMilpAdapter)
    monkeypatch.setenv("TRIMARKET_SOLVER", "scipy")
    assert get_adapter().name == "scipy"
    with pytest.raises(SolverError):
        get_adapter("cplex")
    assert set(ADAPTERS) >= {"scipy", "highspy"}


def test_lp_dual_signs():
    # min x + 2y  s.t.  x + y = 3 (price 1 at the optimum), y >= 1 (binding, multiplier 1), x <= 10
    lp = LinearProgram()
    lp.add_variable(("x",), cost=1.0)
    lp.add_variable(("y",), cost=2.0)
    lp.add_constraint(("bal",), {("x",): 1.0, ("y",): 1.0}, "=", 3.0)
    lp.add_constraint(("ymin",), {("y",): 1.0}, ">=", 1.0)
    lp.add_constraint(("xmax",), {("x",): 1.0}, "<=", 10.0)
    sol = solve_lp(lp)
    assert sol.objective == pytest.approx(4.0)
    assert sol.duals[("bal",)] == pytest.approx(1.0)
    assert sol.duals[("ymin",)] == pytest.approx(1.0)
    assert sol.duals[("xmax",)] == pytest.approx(0.0)


def test_lp_infeasible_and_unbounded():
    lp = LinearProgram()
    lp.add_variable(("x",), 0, 1, 1.0)
    lp.add_constraint(("r",), {("x",): 1.0}, ">=", 2.0)
    assert solve_lp(lp).status == "infeasible"
    lp = LinearProgram()
    lp.add_variable(("x",), cost=-1.0)
    assert solve_lp(lp).status == "unbounded"


def test_environment_selects_adapter_when_case_is_silent(monkeypatch, micro_case):
    from trimarket.studies import solve_equilibrium
    pytest.importorskip("highspy")
    monkeypatch.setenv("TRIMARKET_SOLVER", "highspy")
    assert micro_case.solver.adapter is None
    assert solve_equilibrium(micro_case).result.stats["adapter"] == "highspy"
