import pytest

from trimarket.lp import ModelError
from trimarket.markets import (build_cem_lp, build_electricity_lp, build_gas_lp, emissions_per_period,
                               hourly_carbon_prices, line_ids, zero_gas_prices)
from trimarket.solvers import solve_lp

from conftest import micro_doc


def gas_toy(make_case, demand=0.5):
    doc = micro_doc()
    doc["power"]["generators"] = [doc["power"]["generators"][0]]
    doc["gas"] = {"nodes": [1], "suppliers": [{"id": "W1", "node": 1, "f_min": 0, "f_max": 1.0, "cost": 2090}],
                  "demand": {"1": [demand]}}
    return make_case(doc)


def test_electricity_variable_count(fixture_case):
    lp = build_electricity_lp(fixture_case, zero_gas_prices(fixture_case), {t: 0.0 for t in range(1, 25)}).lp
    assert len(lp.variables_of("P_G")) == 6 * 24
    assert lp.n_vars == 6 * 24 + 14 * 24 + 14 * 24 == 816


def test_gas_unit_cost_includes_fuel_and_carbon(fixture_case):
    mu = {k: 2100.0 for k in zero_gas_prices(fixture_case)}
    lp = build_electricity_lp(fixture_case, mu, {t: 18.0 for t in range(1, 25)}).lp
    assert lp.variable(("P_G", "G2", 1)).cost == pytest.approx(3.5 + 0.006 * 2100 + 0.425 * 18)
    assert lp.variable(("P_G", "G2", 1)).cost == pytest.approx(23.75)


def test_clean_unit_cost_unaffected_by_prices(fixture_case):
    lp = build_electricity_lp(fixture_case, zero_gas_prices(fixture_case), {t: 0.0 for t in range(1, 25)}).lp
    assert lp.variable(("P_G", "G5", 7)).cost == 21.90


def test_missing_gas_price_is_reported(fixture_case):
    with pytest.raises(ModelError, match="gas price"):
        build_electricity_lp(fixture_case, {}, {t: 0.0 for t in range(1, 25)})


def test_rows_tagged_by_family(fixture_case):
    lp = build_electricity_lp(fixture_case, zero_gas_prices(fixture_case), {t: 0.0 for t in range(1, 25)}).lp
    assert len(lp.rows_of("lambda")) == 14 * 24
    assert len(lp.rows_of("rho3_max")) == 20 * 24
    assert len(lp.rows_of("rho4")) == 24
    # every unit has a ramp limit and no initial output, so hour 1 carries none
    assert len(lp.rows_of("rho2_min")) == 6 * 23
    assert len(line_ids(fixture_case)) == 20


def test_single_node_gas_price_is_marginal_supplier(make_case):
    lp = build_gas_lp(gas_toy(make_case), {}).lp
    sol = solve_lp(lp)
    assert sol.x[("F_S", "W1", 1)] == pytest.approx(0.5)
    assert sol.duals[("mu", 1, 1)] == pytest.approx(2090.0)


def test_gas_burn_beyond_supply_curtails_demand(micro_case):
    # G2 burns 0.01 Mm3/MWh; 180 MW needs 1.8 of the 2.0 available, leaving 0.2 of the 0.5 demand
    lp = build_gas_lp(micro_case, {("G1", 1): 0.0, ("G2", 1): 180.0}).lp
    sol = solve_lp(lp)
    unserved = 0.5 - sol.x[("F_LD", 1, 1)]
    assert unserved == pytest.approx(0.3)
    assert sol.objective >= micro_case.penalties.gas_load * 0.3


def test_zero_gas_problem_has_zero_objective(make_case):
    lp = build_gas_lp(gas_toy(make_case, demand=0.0), {}).lp
    sol = solve_lp(lp)
    assert sol.objective == pytest.approx(0.0)
    assert all(v == pytest.approx(0.0) for v in sol.x.values())


def ladder_case(make_case, fixture_case, demands=True):
    """One-hour case carrying the fixture's allowance ladder and demands."""
    doc = micro_doc()
    doc["carbon"] = {"amount_basis": "per_hour", "cap": fixture_case.carbon.cap,
                     "offers": [{"id": o.id, "amount": o.amount, "cost": o.cost} for o in fixture_case.carbon.offers],
                     "demands": [{"id": d.id, "amount": d.amount} for d in fixture_case.carbon.demands] if demands else []}
    return make_case(doc)


def cem_price(case, emission):
    return solve_lp(build_cem_lp(case, {1: emission}).lp)


def test_cem_merit_price_mid_offer(make_case, fixture_case):
    # 134.38 t of generation plus 30 t of exogenous demand lands inside offer S4 (cost 18)
    sol = cem_price(ladder_case(make_case, fixture_case), 134.38)
    assert sol.duals[("p_co2", 1)] == pytest.approx(18.0)
    assert sum(sol.x[("Q_LD", d, 1)] for d in ("CD1", "CD2")) == pytest.approx(30.0)


def test_cem_zero_requirement(make_case, fixture_case):
    sol = cem_price(ladder_case(make_case, fixture_case, demands=False), 0.0)
    assert sol.objective == pytest.approx(0.0)
    assert all(v == pytest.approx(0.0) for v in sol.x.values())
    # with nothing traded any price up to the cheapest offer supports the optimum
    assert sol.duals[("p_co2", 1)] <= 12.0 + 1e-9


def test_cem_coverable_emissions_capped_by_offers(make_case, fixture_case):
    case = ladder_case(make_case, fixture_case)
    ok = cem_price(case, 225.0)
    assert ok.ok
    assert sum(ok.x[("Q_LD", d, 1)] for d in ("CD1", "CD2")) == pytest.approx(0.0)
    assert cem_price(case, 225.5).status == "infeasible"


def test_cem_rhs_links_cover_emitting_units(fixture_case):
    h = build_cem_lp(fixture_case.with_time(24), {1: 0.0})
    links = h.rhs_links[("p_co2", 1)]
    assert len(links) == 24 * 5  # G1, G2, G3, G4, G6 emit; G5 does not


def test_hourly_prices_and_period_emissions(fixture_case):
    case = fixture_case.with_time(12)
    assert hourly_carbon_prices(case, {1: 5.0, 2: 7.0})[13] == 7.0
    dispatch = {(g.id, t): 1.0 for g in case.dispatchable for t in case.time.T}
    per = emissions_per_period(case, dispatch)
    rate = sum(g.emission_rate for g in case.dispatchable)
    assert per == {1: pytest.approx(12 * rate), 2: pytest.approx(12 * rate)}
