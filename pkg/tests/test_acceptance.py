"""Acceptance criteria, one test each; every test records a PASS/FAIL line that
is printed in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v`` (takes a few minutes:
about thirty solves of the 24-hour fixture).
"""

import sys
import time

import numpy as np
import pytest

from trimarket.case import case_from_dict
from trimarket.kkt import build_system, cap_budget
from trimarket.milp import assemble_milp, estimate_big_m, export_model, solve
from trimarket.studies import (DEFAULT_GROWTH, DEFAULT_SCALARS, DEFAULT_STRATEGIES, retrofit, row_from_outcome,
                               run_single, scale_demand)
from trimarket.verify import (brute_force_equilibrium, conservation_residuals, fixed_point_check,
                              merit_order_cem, residual_report)

from conftest import ACCEPTANCE_LINES, micro_doc

TOL_KKT = 1e-6
TOL_FIXED_POINT = 1e-4
TOL_CONSERVATION = 1e-6


def record(n, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {n}: {title} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


@pytest.fixture(scope="module")
def runs(fixture_case, solved):
    """Every fixture scenario the criteria look at, keyed by (study, label)."""
    out = {}
    for g in DEFAULT_GROWTH:
        label = f"{g * 100:+.0f}%"
        key = "base" if g == 0 else f"demand{label}"
        out[("demand", label)] = solved(key, scale_demand(fixture_case, 1 + g))
        key = "base-cap" if g == 0 else f"demand-cap{label}"
        out[("demand-cap", label)] = solved(key, scale_demand(fixture_case, 1 + g), "cap-and-trade")
    for s in DEFAULT_STRATEGIES:
        label = "+".join(s) if s else "none"
        out[("retrofit", label)] = solved("base" if not s else f"retrofit-{label}", retrofit(fixture_case, s))
    for k in DEFAULT_SCALARS:
        out[("clearing", k)] = solved("base" if k == 1 else f"clearing-{k}", fixture_case.with_time(k))
    out[("binding-cap", "140")] = solved("binding-cap", _with_cap(fixture_case, 140.0), "cap-and-trade")
    return out


def _with_cap(case, cap):
    from dataclasses import replace
    return replace(case, carbon=replace(case.carbon, cap=cap))


# 1 ---------------------------------------------------------------------------

def test_criterion_1_oracle_equivalence(micro_case):
    start = time.perf_counter()
    sys_ = build_system(micro_case)
    model = assemble_milp(sys_, estimate_big_m(sys_, micro_case))
    res = solve(model)
    oracle = brute_force_equilibrium(micro_case)
    elapsed = time.perf_counter() - start
    prob = model.problem
    primal = prob.primal_mask()
    ok = res.status == "optimal" and len(prob.pairs) <= 24 and len(oracle) >= 1
    dp = dd = float("inf")
    if ok:
        z = np.array([res.values[n] for n in prob.names])
        best = min(oracle, key=lambda s: np.max(np.abs(s.z[primal] - z[primal])))
        dp = float(np.max(np.abs(best.z[primal] - z[primal])))
        dd = float(np.max(np.abs(best.z[~primal] - z[~primal])))
    passed = ok and dp <= 1e-8 and dd <= 1e-6 and elapsed < 5.0
    record(1, "MILP equals brute-force enumeration on micro1", passed,
           f"{len(prob.pairs)} pairs, {len(oracle)} oracle solution(s), primal diff {dp:.2e}, "
           f"price diff {dd:.2e}, {elapsed:.2f} s")


# 2 ---------------------------------------------------------------------------

def test_criterion_2_fixed_point(runs, micro_case):
    worst_gap, worst_time, failures = 0.0, 0.0, []
    _, _, micro = run_single(micro_case)
    outcomes = [("micro1", micro)] + [(f"{k[0]}:{k[1]}", o) for k, o in runs.items()]
    for label, out in outcomes:
        if out.solution is None:
            failures.append(f"{label} unsolved ({out.result.status})")
            continue
        start = time.perf_counter()
        rep = fixed_point_check(out.solution, tol=TOL_FIXED_POINT)
        worst_time = max(worst_time, time.perf_counter() - start)
        for m in rep.markets.values():
            worst_gap = max(worst_gap, m.objective_gap, m.dual_objective_gap)
        if not rep.passed:
            failures.append(label)
    passed = not failures and worst_time < 5.0
    record(2, "market re-solves reproduce every equilibrium", passed,
           f"{len(outcomes)} solutions, worst relative gap {worst_gap:.2e} (tol {TOL_FIXED_POINT:g}), "
           f"slowest check {worst_time:.2f} s" + (f", failed: {failures}" if failures else ""))


# 3 ---------------------------------------------------------------------------

def test_criterion_3_kkt_residuals(runs):
    worst = {"stationarity": 0.0, "complementarity": 0.0, "primal": 0.0}
    flags, failures = 0, []
    for key, out in runs.items():
        if out.solution is None:
            failures.append(f"{key} unsolved")
            continue
        rep = residual_report(out.result.values, out.problem, out.model, tol=TOL_KKT)
        worst["stationarity"] = max(worst["stationarity"], rep.stationarity)
        worst["complementarity"] = max(worst["complementarity"], rep.complementarity)
        worst["primal"] = max(worst["primal"], rep.primal)
        flags += len(rep.big_m_flags)
        if not rep.passed:
            failures.append(key)
    passed = not failures and flags == 0
    record(3, "KKT residuals and big-M audit", passed,
           ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + f" (tol {TOL_KKT:g}), big-M flags {flags}")


# 4 ---------------------------------------------------------------------------

def _exogenous_emission_case(fixture_case, emission):
    """One bus, one coal unit with unit emission rate serving ``emission`` MW, fixture allowance market."""
    doc = micro_doc()
    doc["power"]["generators"] = [{"id": "C1", "bus": 1, "fuel": "coal", "p_min": 0, "p_max": 400,
                                   "cost": 10.0, "emission_rate": 1.0}]
    doc["power"]["demand"]["1"] = [emission]
    cm = fixture_case.carbon
    doc["carbon"] = {"amount_basis": "per_hour", "cap": cm.cap,
                     "offers": [{"id": o.id, "amount": o.amount, "cost": o.cost} for o in cm.offers],
                     "demands": [{"id": d.id, "amount": d.amount} for d in cm.demands]}
    return case_from_dict(doc)


def test_criterion_4_merit_order_price(fixture_case):
    cm = fixture_case.carbon
    details, passed = [], True
    for requirement, expected in ((164.38, 18.0), (200.48, 25.0)):
        oracle = merit_order_cem(requirement, cm.offers, [], fixture_case.penalties.carbon_demand).price
        demand = sum(d.amount for d in cm.demands)
        sol, row, _ = run_single(_exogenous_emission_case(fixture_case, requirement - demand))
        price = sol.carbon_price[1] if sol is not None else float("nan")
        served = sol.carbon_demand_served() if sol is not None else float("nan")
        ok = (row.verified and abs(price - expected) <= 1e-6 and abs(oracle - expected) <= 1e-6
              and abs(served - demand) <= 1e-6)
        passed &= ok
        details.append(f"{requirement} t -> equilibrium {price:.6g}, oracle {oracle:g}, expected {expected:g}")
    record(4, "merit-order carbon price", passed, "; ".join(details))


# 5 ---------------------------------------------------------------------------

def test_criterion_5_cap_and_trade_zero_price(runs):
    slack_rows, bad = 0, []
    for key, out in runs.items():
        if key[0] != "demand-cap" or out.solution is None:
            if key[0] == "demand-cap":
                bad.append(f"{key} unsolved")
            continue
        sol = out.solution
        slack = cap_budget(sol.case) - sol.total_emission()
        if slack > 1e-6:
            slack_rows += 1
            if sol.carbon_price[1] != 0.0:
                bad.append(f"{key[1]} price {sol.carbon_price[1]!r} with slack {slack:.3g}")
    binding = runs[("binding-cap", "140")]
    bsol = binding.solution
    if bsol is None:
        bad.append("binding cap unsolved")
        bdetail = "binding case unsolved"
    else:
        bslack = cap_budget(bsol.case) - bsol.total_emission()
        price = bsol.carbon_price[1]
        if not (abs(bslack) <= 1e-6 and price > 0 and abs(price * bslack) <= 1e-6):
            bad.append(f"binding cap: slack {bslack:.3g}, price {price:.6g}")
        bdetail = f"binding cap 140 t/h: slack {bslack:.1e}, price {price:.4g}"
    record(5, "cap-and-trade price zero below the cap", not bad and slack_rows > 0,
           f"{slack_rows} slack rows at cap 225 t/h all priced 0; {bdetail}" + (f"; problems: {bad}" if bad else ""))


# 6 ---------------------------------------------------------------------------

def _nondecreasing(xs):
    return all(b >= a - 1e-9 for a, b in zip(xs, xs[1:]))


def test_criterion_6_trends(runs):
    rows = {k: row_from_outcome(str(k[1]), o) for k, o in runs.items()}
    demand = [rows[("demand", f"{g * 100:+.0f}%")] for g in DEFAULT_GROWTH]
    e = [r.avg_electricity_price for r in demand]
    c = [r.carbon_price for r in demand]
    a_ok = all(r.verified for r in demand) and _nondecreasing(e) and _nondecreasing(c)

    retro = {("+".join(s) if s else "none"): rows[("retrofit", "+".join(s) if s else "none")]
             for s in DEFAULT_STRATEGIES}
    base = retro["none"].total_emission
    b_ok = all(r.verified for r in retro.values()) and \
        all(r.total_emission < base for k, r in retro.items() if k != "none") and \
        retro["G1"].total_emission < retro["G2"].total_emission

    clear = [rows[("clearing", k)] for k in DEFAULT_SCALARS]
    p = [r.carbon_price for r in clear]
    em = [r.avg_hourly_emission for r in clear]
    c_ok = all(r.verified for r in clear) and _nondecreasing(p[::-1]) and _nondecreasing(em)

    detail = (f"(a) {'ok' if a_ok else 'FAIL'} elec {[round(x, 2) for x in e]} carbon {[round(x, 2) for x in c]}; "
              f"(b) {'ok' if b_ok else 'FAIL'} emission {{{', '.join(f'{k}: {r.total_emission:.0f}' for k, r in retro.items())}}}; "
              f"(c) {'ok' if c_ok else 'FAIL'} k={list(DEFAULT_SCALARS)} carbon {[round(x, 2) for x in p]} "
              f"t/h {[round(x, 2) for x in em]}")
    record(6, "trend reproduction on the fixture", a_ok and b_ok and c_ok, detail)


# 7 ---------------------------------------------------------------------------

def test_criterion_7_conservation(runs):
    worst = {"power": 0.0, "gas": 0.0, "allowance": 0.0}
    unsolved = []
    for key, out in runs.items():
        if out.solution is None:
            unsolved.append(key)
            continue
        res = conservation_residuals(out.solution)
        for k in worst:
            worst[k] = max(worst[k], res[k])
    passed = not unsolved and max(worst.values()) <= TOL_CONSERVATION
    record(7, "power, gas and allowance balances", passed,
           ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + f" (tol {TOL_CONSERVATION:g})")


# 8 ---------------------------------------------------------------------------

def test_criterion_8_performance(fixture_case):
    start = time.perf_counter()
    sys_ = build_system(fixture_case)
    model = assemble_milp(sys_, estimate_big_m(sys_, fixture_case))
    assemble = time.perf_counter() - start
    res = solve(model)
    wall = res.stats.get("wall_time", float("inf"))
    first = export_model(model)[0].encode()
    sys2 = build_system(fixture_case)
    second = export_model(assemble_milp(sys2, estimate_big_m(sys2, fixture_case)))[0].encode()
    passed = assemble < 2.0 and res.ok and wall < 60.0 and first == second
    record(8, "fixture MILP performance and MPS determinism", passed,
           f"assemble {assemble:.2f} s, solve {wall:.1f} s ({res.status}, adapter {res.stats.get('adapter')}), "
           f"{model.n_binary} binaries, MPS {'identical' if first == second else 'DIFFERENT'} "
           f"({len(first)} bytes)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
