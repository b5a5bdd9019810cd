import math

import pytest

from trimarket.lp import LinearProgram, ModelError, dump, fmt_name, name_key, primal_residuals
from trimarket.markets import build_electricity_lp
from trimarket.solvers import solve_lp


def small_lp():
    lp = LinearProgram(market="toy")
    lp.add_variable(("P_G", "G1", 1), 0, 80, 8.95)
    lp.add_variable(("theta", 1, 1))
    lp.add_constraint(("lambda", 1, 1), {("P_G", "G1", 1): 1.0}, "=", 50.0)
    lp.add_constraint(("cap", 1), {("P_G", "G1", 1): 1.0}, "<=", 60.0)
    return lp


def test_variable_attributes():
    lp = LinearProgram()
    ref = lp.add_variable(("P_G", "G1", 1), 0, 80, 8.95)
    assert (ref.lower, ref.upper, ref.cost, ref.index) == (0, 80, 8.95, 0)
    assert str(ref) == "P_G[G1,1]"


def test_free_variable():
    lp = LinearProgram()
    ref = lp.add_variable(("theta", "REF", 1))
    assert ref.lower == -math.inf and ref.upper == math.inf


def test_duplicate_variable_rejected():
    lp = small_lp()
    with pytest.raises(ModelError, match="duplicate"):
        lp.add_variable(("theta", 1, 1))


def test_inverted_bounds_rejected():
    with pytest.raises(ModelError):
        LinearProgram().add_variable(("x",), 2, 1)


def test_row_returns_dual_tag():
    lp = small_lp()
    assert lp.row(("lambda", 1, 1)).sense == "="
    assert lp.has_row(("lambda", 1, 1))


def test_row_with_unknown_variable_rejected():
    lp = small_lp()
    with pytest.raises(ModelError, match="unknown variable"):
        lp.add_constraint(("lambda", 2, 1), {("P_G", "G9", 1): 1.0}, "=", 0.0)


def test_duplicate_tag_rejected():
    lp = small_lp()
    with pytest.raises(ModelError, match="duplicate dual tag"):
        lp.add_constraint(("lambda", 1, 1), {("theta", 1, 1): 1.0}, "=", 0.0)


def test_bad_sense_rejected():
    with pytest.raises(ModelError):
        small_lp().add_constraint(("r",), {("theta", 1, 1): 1.0}, "<", 0.0)


def test_feasible_assignment_has_zero_residuals():
    lp = small_lp()
    rep = primal_residuals(lp, {("P_G", "G1", 1): 50.0, ("theta", 1, 1): 0.0})
    assert rep.max_violation == 0.0
    assert rep.objective == pytest.approx(8.95 * 50)


def test_violated_le_row_reports_excess():
    lp = small_lp()
    rep = primal_residuals(lp, {("P_G", "G1", 1): 60.5, ("theta", 1, 1): 0.0})
    assert rep.residuals[("cap", 1)] == pytest.approx(0.5)
    assert rep.residuals[("lambda", 1, 1)] == pytest.approx(10.5)


def test_bound_violation_reported():
    rep = primal_residuals(small_lp(), {("P_G", "G1", 1): 81.0, ("theta", 1, 1): 0.0})
    assert rep.bound_violations[("P_G", "G1", 1)] == pytest.approx(1.0)


def test_missing_assignment_rejected():
    with pytest.raises(ModelError, match="misses"):
        primal_residuals(small_lp(), {("theta", 1, 1): 0.0})


def test_micro1_dispatch_optimum_is_feasible(micro_case):
    # gas price 1000 and carbon price 20 are micro1's equilibrium prices
    lp = build_electricity_lp(micro_case, {(1, 1): 1000.0}, {1: 20.0}).lp
    sol = solve_lp(lp)
    assert sol.ok
    rep = primal_residuals(lp, sol.x)
    assert rep.max_violation <= 1e-9
    assert sol.x[("P_G", "G2", 1)] == pytest.approx(60.0)
    assert sol.duals[("lambda", 1, 1)] == pytest.approx(26.0)


def test_dump_lists_rows_and_bounds():
    text = dump(small_lp())
    assert "lambda[1,1]: +1 P_G[G1,1] = 50" in text
    assert "0 <= P_G[G1,1] <= 80" in text


def test_name_helpers():
    assert fmt_name(("rho4",)) == "rho4"
    names = [("x", "b", 2), ("x", 10, 1), ("x", 2, 1), ("x", "a", 1)]
    assert sorted(names, key=name_key) == [("x", 2, 1), ("x", 10, 1), ("x", "a", 1), ("x", "b", 2)]


def test_matrix_shape():
    lp = small_lp()
    assert lp.matrix().shape == (2, 2)
