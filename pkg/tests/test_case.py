import json

import pytest
from hypothesis import given, settings, strategies as st

from trimarket.case import (CaseError, TimeStructure, case_from_dict, coupling_map, parse_case, serialize_case,
                            validate)

from conftest import fixture_doc, micro_doc


def test_fixture_generator_g1(fixture_case):
    g1 = fixture_case.generator("G1")
    assert (g1.p_max, g1.cost, g1.emission_rate) == (80, 8.95, 0.825)


def test_fixture_supplier_w5(fixture_case):
    w5 = next(s for s in fixture_case.gas.suppliers if s.id == "W5")
    assert (w5.f_min, w5.f_max, w5.cost, w5.node) == (0, 0.9, 2300, 8)


def test_zero_buses_rejected():
    doc = micro_doc()
    doc["power"]["buses"] = []
    with pytest.raises(CaseError, match="empty power network"):
        case_from_dict(doc)


def test_syntax_error_reports_location():
    with pytest.raises(CaseError) as exc:
        parse_case('{"power": ')
    assert ":" in exc.value.path


def test_unknown_field_reports_path():
    doc = micro_doc()
    doc["power"]["generators"][0]["colour"] = "red"
    with pytest.raises(CaseError) as exc:
        case_from_dict(doc)
    assert exc.value.path.startswith("power.generators[0]")


def test_non_numeric_value_reports_path():
    doc = micro_doc()
    doc["power"]["generators"][1]["p_max"] = "sixty"
    with pytest.raises(CaseError) as exc:
        case_from_dict(doc)
    assert exc.value.path == "power.generators[1].p_max"


def test_fixture_validates_cleanly(fixture_case):
    rep = validate(fixture_case)
    assert rep.errors == []
    # cap 225 equals the offer total, so no cap warning
    assert not any("cap" in w for w in rep.warnings)


def test_p_min_above_p_max_names_unit(make_case):
    doc = micro_doc()
    doc["power"]["generators"][0]["p_min"] = 90
    rep = validate(make_case(doc))
    assert len(rep.errors) == 1 and "G1" in rep.errors[0]


def test_cap_mismatch_warns(make_case):
    doc = micro_doc()
    doc["carbon"]["cap"] = 50
    rep = validate(make_case(doc))
    assert rep.ok and any("cap" in w for w in rep.warnings)


def test_unknown_gas_node_is_error(make_case):
    doc = micro_doc()
    doc["power"]["generators"][1]["gas_node"] = 7
    rep = validate(make_case(doc))
    assert any("G2" in e for e in rep.errors)


@pytest.mark.parametrize("k,t,expected", [(3, 5, 2), (24, 1, 1), (24, 17, 1), (24, 24, 1), (1, 13, 13)])
def test_coupling_map_entries(k, t, expected):
    assert coupling_map(TimeStructure(24, k))[t] == expected


def test_coupling_map_identity_for_hourly_clearing():
    ts = TimeStructure(24, 1)
    assert coupling_map(ts) == {t: t for t in range(1, 25)}
    assert ts.n_periods == 24


def test_coupling_map_rejects_non_divisor():
    with pytest.raises(CaseError):
        coupling_map(TimeStructure(24, 5))


@given(st.sampled_from([1, 2, 3, 4, 6, 8, 12, 24]))
def test_periods_partition_the_horizon(k):
    ts = TimeStructure(24, k)
    cmap = coupling_map(ts)
    for tc in ts.Tc:
        assert [t for t in ts.T if cmap[t] == tc] == list(ts.hours_in(tc))


def test_with_time_scales_carbon_amounts(fixture_case):
    assert fixture_case.amount_scale() == 1.0
    assert fixture_case.with_time(12).amount_scale() == 12.0


def test_serialize_round_trip(fixture_case):
    again = parse_case(serialize_case(fixture_case))
    assert again == fixture_case


@settings(max_examples=30, deadline=None)
@given(load=st.floats(0, 500, allow_nan=False), cost=st.floats(0, 100, allow_nan=False),
       cap=st.one_of(st.none(), st.floats(0, 1000, allow_nan=False)), k=st.sampled_from([1]))
def test_serialize_round_trip_random(load, cost, cap, k):
    doc = micro_doc()
    doc["power"]["demand"]["1"] = [load]
    doc["power"]["generators"][0]["cost"] = cost
    doc["carbon"]["cap"] = cap
    doc["time"]["cem_period_hours"] = k
    case = case_from_dict(doc)
    assert parse_case(serialize_case(case)) == case
    json.loads(serialize_case(case))


def test_fixture_documents_have_notes():
    for name in ("case14g8", "micro1"):
        assert fixture_doc(name)["notes"]
