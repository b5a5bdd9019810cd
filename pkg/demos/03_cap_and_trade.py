"""Tradable allowance market versus a plain emission cap.

In the default mode, sellers offer allowances at stepped prices and the
carbon price comes from that supply ladder. In cap-and-trade mode there is
only a ceiling on hourly emission: the price is the shadow value of the cap
and drops to zero whenever the cap does not bind.

    python demos/03_cap_and_trade.py
"""

from trimarket import load_fixture, study_cap_sweep
from trimarket.kkt import cap_budget
from trimarket.studies import run_single

case = load_fixture("case14g8")

print("base case, both modes")
for mode in ("proposed", "cap-and-trade"):
    sol, row, _ = run_single(case, mode)
    print(f"  {mode:>13}: carbon {row.carbon_price:6.2f} $/t, emission {row.avg_hourly_emission:6.2f} t/h, "
          f"elec {row.avg_electricity_price:6.2f} $/MWh, verified {row.verified}")
print(f"  cap-and-trade budget is {cap_budget(case):.0f} t over the day, well above what is emitted")

print("\ntightening the hourly cap (cap-and-trade mode)")
print(f"  {'cap t/h':>8} {'carbon $/t':>11} {'t/h':>8} {'elec $/MWh':>11}  ok")
for r in study_cap_sweep(case, (225, 160, 140, 120), mode="cap-and-trade"):
    if r.carbon_price is None:
        print(f"  {r.label:>8}  {r.status}")
        continue
    print(f"  {r.label:>8} {r.carbon_price:11.2f} {r.avg_hourly_emission:8.2f} {r.avg_electricity_price:11.2f}  "
          f"{'yes' if r.verified else 'NO'}")

print("\nshrinking the allowance offers (default mode)")
print(f"  {'offer t':>8} {'carbon $/t':>11} {'t/h':>8} {'elec $/MWh':>11}  ok")
for r in study_cap_sweep(case, (225, 180, 150)):
    if r.carbon_price is None:
        print(f"  {r.label:>8}  {r.status}")
        continue
    print(f"  {r.label:>8} {r.carbon_price:11.2f} {r.avg_hourly_emission:8.2f} {r.avg_electricity_price:11.2f}  "
          f"{'yes' if r.verified else 'NO'}")
