import dataclasses

import pytest

from trimarket.kkt import (DanglingSymbolError, assemble_equilibrium_problem, build_system, cap_budget,
                           dangling_symbols, derive_kkt, system_text)
from trimarket.lp import LinearProgram, ModelError
from trimarket.markets import build_cem_lp, build_electricity_lp
from trimarket.solvers import solve_lp
from trimarket.verify import extract_solution, joint_lp_equilibrium

from conftest import micro_doc
from test_markets import ladder_case


def test_cem_kkt_counts(make_case, fixture_case):
    kkt = derive_kkt(build_cem_lp(ladder_case(make_case, fixture_case), {1: 0.0}).lp)
    assert len(kkt.stationarity) == 2 + 7
    assert len(kkt.pairs) == 2 * 2 + 2 * 7
    assert kkt.free_duals == [("p_co2", 1)]


def test_single_free_variable_single_equality():
    lp = LinearProgram()
    lp.add_variable(("x",), cost=1.0)
    lp.add_constraint(("e",), {("x",): 1.0}, "=", 3.0)
    kkt = derive_kkt(lp)
    assert len(kkt.stationarity) == 1 and kkt.pairs == []
    assert kkt.stationarity[0].duals == {("e",): -1.0}


def test_variable_bounds_become_pairs():
    lp = LinearProgram()
    lp.add_variable(("x",), 0.0, 5.0, cost=1.0)
    kkt = derive_kkt(lp)
    assert [p.dual for p in kkt.pairs] == [("lb", "x"), ("ub", "x")]
    assert kkt.pairs[1].slack == {("x",): -1.0} and kkt.pairs[1].constant == 5.0


def test_sign_convention_le_row():
    lp = LinearProgram()
    lp.add_variable(("x",), cost=2.0)
    lp.add_constraint(("r",), {("x",): 3.0}, "<=", 6.0)
    pair = derive_kkt(lp).pairs[0]
    # 3x <= 6 becomes 6 - 3x >= 0
    assert pair.slack == {("x",): -3.0} and pair.constant == 6.0


def g5_only_case(make_case, load):
    doc = micro_doc()
    doc["power"]["generators"] = [{"id": "G5", "bus": 1, "fuel": "clean", "p_min": 0, "p_max": 30, "cost": 21.90}]
    doc["power"]["demand"]["1"] = [load]
    return make_case(doc)


def test_clean_unit_interior_sets_lmp(make_case):
    case = g5_only_case(make_case, 20.0)
    lp = build_electricity_lp(case, {(1, 1): 0.0}, {1: 0.0}).lp
    kkt = derive_kkt(lp)
    eq = next(s for s in kkt.stationarity if s.variable == ("P_G", "G5", 1))
    assert eq.constant == 21.90
    assert eq.duals[("lambda", 1, 1)] == -1.0
    sol = solve_lp(lp)
    assert sol.x[("P_G", "G5", 1)] == pytest.approx(20.0)
    assert sol.duals[("rho1_max", "G5", 1)] == pytest.approx(0.0)
    assert sol.duals[("lambda", 1, 1)] == pytest.approx(21.90)


def test_hourly_price_links_identity(fixture_case):
    sys_ = build_system(fixture_case)
    links = sys_.links_of("price-time-expansion")
    assert len(links) == 24
    assert all(ln.source == ("p_co2_h", t) and ln.target == ("p_co2", t) for t, ln in zip(range(1, 25), links))


def test_daily_clearing_links_to_one_price(fixture_case):
    links = build_system(fixture_case.with_time(24)).links_of("price-time-expansion")
    assert {ln.target for ln in links} == {("p_co2", 1)}


def test_shared_primal_links(fixture_case):
    links = build_system(fixture_case).links_of("shared-primal")
    assert len(links) == 3 * 24
    assert {ln.source[1] for ln in links} == {"G2", "G3", "G4"}


def test_micro1_bundle_sizes(micro_case):
    sys_ = build_system(micro_case)
    kinds = [v.kind for v in sys_.variables.values()]
    assert kinds.count("primal") == 8
    assert kinds.count("dual") == 18
    assert len(sys_.feasibility()) == 4
    assert len(sys_.stationarity()) == 8
    assert len(sys_.pairs) == 14


def test_fixture_is_closed(fixture_case):
    assert dangling_symbols(build_system(fixture_case)) == []


def test_missing_gas_price_symbol_reported(micro_case):
    sys_ = build_system(micro_case)
    variables = {k: v for k, v in sys_.variables.items() if k[0] != "mu"}
    broken = dataclasses.replace(sys_, variables=variables)
    bad = dangling_symbols(broken)
    assert any(sym == ("mu", 1, 1) for sym, _, _ in bad)
    with pytest.raises(DanglingSymbolError, match="mu"):
        assemble_equilibrium_problem(broken)


def test_unknown_mode_rejected(micro_case):
    with pytest.raises(ModelError):
        build_system(micro_case, "laissez-faire")


def test_cap_and_trade_slack_cap_gives_zero_price(micro_case):
    res = joint_lp_equilibrium(micro_case, "cap-and-trade")
    assert res.status == "optimal"
    assert res.values[("p_co2_cap",)] == pytest.approx(0.0, abs=1e-9)


def test_cap_and_trade_binding_cap_admits_positive_price(make_case):
    doc = micro_doc()
    doc["carbon"]["cap"] = 40.0
    case = make_case(doc)
    res = joint_lp_equilibrium(case, "cap-and-trade")
    sol = extract_solution(case, res.values, "cap-and-trade")
    assert sol.total_emission() == pytest.approx(cap_budget(case))
    assert sol.carbon_price[1] > 0


def test_zero_cap_forces_emitting_units_off(make_case):
    doc = micro_doc()
    doc["carbon"]["cap"] = 0.0
    case = make_case(doc)
    res = joint_lp_equilibrium(case, "cap-and-trade")
    sol = extract_solution(case, res.values, "cap-and-trade")
    assert all(p == pytest.approx(0.0, abs=1e-9) for p in sol.dispatch.values())


def test_cap_and_trade_without_gas_market(make_case):
    doc = micro_doc(solver={"cap_and_trade_gas_coupling": False})
    sys_ = build_system(make_case(doc), "cap-and-trade")
    assert set(sys_.markets) == {"electricity"}
    assert not any(k[0] == "mu" for k in sys_.variables)


def test_system_text_is_deterministic(micro_case):
    a, b = system_text(build_system(micro_case)), system_text(build_system(micro_case))
    assert a == b
    assert "_|_ nu2_max[S1,1] >= 0" in a
    assert "[link:shared-primal] P_G[G2,1] -> mu[1,1]" in a
