"""The three sensitivity studies on the bundled 14-bus / 8-node / 24 h case.

Each row is a full equilibrium solve followed by verification. Expect a few
minutes on one core; pass --quick to run a reduced set of points.

    python demos/02_fixture_studies.py [--quick]
"""

import sys

from trimarket import load_fixture, study_clearing_time, study_retrofit, sweep_demand

quick = "--quick" in sys.argv
case = load_fixture("case14g8")


def show(title, rows, key_label):
    print(f"\n{title}")
    print(f"  {key_label:>10} {'elec $/MWh':>11} {'gas $':>9} {'carbon $/t':>11} {'emission t':>11} {'t/h':>8}  ok")
    for r in rows:
        if r.avg_electricity_price is None:
            print(f"  {r.label:>10}  {r.status}")
            continue
        print(f"  {r.label:>10} {r.avg_electricity_price:11.2f} {r.avg_gas_price:9.1f} {r.carbon_price:11.2f} "
              f"{r.total_emission:11.1f} {r.avg_hourly_emission:8.2f}  {'yes' if r.verified else 'NO'}")


growth = (0.0, 0.15, 0.30) if quick else (0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30)
show("electric demand growth: prices rise with load", sweep_demand(case, growth), "growth")

strategies = [(), ("G1",), ("G2",)] if quick else [(), ("G1",), ("G2",), ("G3",), ("G1", "G2"), ("G2", "G3"),
                                                   ("G1", "G3"), ("G1", "G2", "G3")]
show("retrofitting units: the coal unit G1 gives the largest cut",
     study_retrofit(case, strategies), "retrofit")

scalars = (1, 24) if quick else (1, 3, 12, 24)
show("carbon clearing period (hours): longer periods pool the allowance supply",
     study_clearing_time(case, scalars), "k")
