"""Regenerate the bundled case files in src/trimarket/fixtures/.

Generator, gas-supplier and allowance data are the published table values.
Everything else (network ratings, the 24 h load shape, gas demands, ramp
limits, bus placement of G1/G5/G6) is synthetic and documented in
fixtures/README.md.

    python tools/build_fixtures.py
"""

import json
import math
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "trimarket" / "fixtures"

# IEEE 14-bus branch reactances (p.u.); susceptance = 1/x
BRANCHES = [
    (1, 2, 0.05917), (1, 5, 0.22304), (2, 3, 0.19797), (2, 4, 0.17632), (2, 5, 0.17388),
    (3, 4, 0.17103), (4, 5, 0.04211), (4, 7, 0.20912), (4, 9, 0.55618), (5, 6, 0.25202),
    (6, 11, 0.19890), (6, 12, 0.25581), (6, 13, 0.13027), (7, 8, 0.17615), (7, 9, 0.11001),
    (9, 10, 0.08450), (9, 14, 0.27038), (10, 11, 0.19207), (12, 13, 0.19988), (13, 14, 0.34802),
]
# synthetic thermal ratings (MW)
RATINGS = {(1, 2): 150, (1, 5): 90, (2, 3): 90, (2, 4): 80, (2, 5): 70, (3, 4): 60, (4, 5): 80}
DEFAULT_RATING = 50

# IEEE 14-bus nominal loads (MW)
BUS_LOAD = {2: 21.7, 3: 94.2, 4: 47.8, 5: 7.6, 6: 11.2, 9: 29.5, 10: 9.0, 11: 3.5,
            12: 6.1, 13: 13.5, 14: 14.9}
# synthetic daily shape: cosine with a midday peak between hours 12 and 13,
# mean 200 MW and a +/-20 % swing (160..240 MW system load)
MEAN_LOAD = 200.0
SWING = 0.20
PEAK_HOUR = 12.5
SHAPE = [round(MEAN_LOAD / sum(BUS_LOAD.values()) * (1 + SWING * math.cos(2 * math.pi * (t - PEAK_HOUR) / 24)), 4)
         for t in range(1, 25)]

GENERATORS = [
    {"id": "G1", "bus": 1, "fuel": "coal", "p_min": 0, "p_max": 80, "cost": 8.95, "emission_rate": 0.825, "ramp": 40},
    {"id": "G2", "bus": 3, "fuel": "gas", "p_min": 0, "p_max": 70, "cost": 3.5, "heat_rate": 0.006, "gas_node": 4,
     "emission_rate": 0.425, "ramp": 50},
    {"id": "G3", "bus": 5, "fuel": "gas", "p_min": 0, "p_max": 60, "cost": 1.5, "heat_rate": 0.007, "gas_node": 4,
     "emission_rate": 0.435, "ramp": 50},
    {"id": "G4", "bus": 7, "fuel": "gas", "p_min": 0, "p_max": 60, "cost": 2.5, "heat_rate": 0.0065, "gas_node": 3,
     "emission_rate": 0.435, "ramp": 50},
    {"id": "G5", "bus": 6, "fuel": "clean", "p_min": 0, "p_max": 30, "cost": 21.90, "emission_rate": 0.0, "ramp": 30},
    {"id": "G6", "bus": 2, "fuel": "coal", "p_min": 0, "p_max": 80, "cost": 9.5, "emission_rate": 0.625, "ramp": 40},
    {"id": "G7", "bus": 3, "fuel": "wind", "p_min": 0, "p_max": 50, "cost": 0.0},
]

SUPPLIERS = [
    {"id": "W1", "node": 1, "f_min": 0, "f_max": 1.0, "cost": 2090},
    {"id": "W2", "node": 3, "f_min": 0, "f_max": 1.2, "cost": 2100},
    {"id": "W3", "node": 4, "f_min": 0, "f_max": 1.1, "cost": 2110},
    {"id": "W4", "node": 6, "f_min": 0, "f_max": 1.2, "cost": 2200},
    {"id": "W5", "node": 8, "f_min": 0, "f_max": 0.9, "cost": 2300},
]
PIPELINES = [(1, 2, 2.0), (2, 3, 2.0), (3, 4, 2.0), (2, 5, 2.0), (5, 6, 2.0), (4, 7, 2.0), (7, 8, 2.0)]
GAS_LOAD = {2: 0.60, 5: 0.50, 7: 0.45, 8: 0.30}

OFFERS = [("S1", 60, 12), ("S2", 50, 15), ("S3", 40, 16), ("S4", 30, 18), ("S5", 20, 20), ("S6", 15, 25),
          ("S7", 10, 26)]
DEMANDS = [("CD1", 20), ("CD2", 10)]


def r(x):
    return round(x, 6)


def case14g8():
    return {
        "name": "case14g8",
        "notes": "14-bus / 8-node / 24 h reconstructed case; see fixtures/README.md for synthetic data.",
        "time": {"hours": 24, "cem_period_hours": 1},
        "penalties": {"electric_load": 1000.0, "gas_load": 1.0e6, "carbon_demand": 1000.0},
        "power": {
            "base_mva": 100.0,
            "buses": list(range(1, 15)),
            "reference_bus": 1,
            "lines": [{"from": i, "to": j, "susceptance": r(1 / x), "capacity": RATINGS.get((i, j), DEFAULT_RATING)}
                      for i, j, x in BRANCHES],
            "demand": {str(b): [r(p * s) for s in SHAPE] for b, p in BUS_LOAD.items()},
            "generators": GENERATORS,
        },
        "gas": {
            "nodes": list(range(1, 9)),
            "pipelines": [{"from": i, "to": j, "capacity": c} for i, j, c in PIPELINES],
            "suppliers": SUPPLIERS,
            "demand": {str(n): [r(q * s) for s in SHAPE] for n, q in GAS_LOAD.items()},
        },
        "carbon": {
            "amount_basis": "per_hour",
            "cap": 225.0,
            "offers": [{"id": i, "amount": a, "cost": c} for i, a, c in OFFERS],
            "demands": [{"id": i, "amount": a} for i, a in DEMANDS],
        },
    }


def micro1():
    return {
        "name": "micro1",
        "notes": ("1 bus, 2 generators, 1 gas node, 2 allowance offers, T=1. Unique, strictly complementary "
                  "equilibrium: G2 at 60 MW (max), G1 40 MW, lambda 26, mu 1000, p_co2 20. "
                  "Bundle: 8 primal + 18 dual variables, 4 feasibility + 8 stationarity equations, 14 pairs."),
        "time": {"hours": 1, "cem_period_hours": 1},
        "power": {
            "buses": [1],
            "reference_bus": 1,
            "lines": [],
            "demand": {"1": [100.0]},
            "generators": [
                {"id": "G1", "bus": 1, "fuel": "coal", "p_min": 0, "p_max": 80, "cost": 10.0, "emission_rate": 0.8},
                {"id": "G2", "bus": 1, "fuel": "gas", "p_min": 0, "p_max": 60, "cost": 3.0, "heat_rate": 0.01,
                 "gas_node": 1, "emission_rate": 0.4},
            ],
        },
        "gas": {
            "nodes": [1],
            "suppliers": [{"id": "W1", "node": 1, "f_min": 0, "f_max": 2.0, "cost": 1000.0}],
            "demand": {"1": [0.5]},
        },
        "carbon": {
            "amount_basis": "per_hour",
            "cap": 100.0,
            "offers": [{"id": "S1", "amount": 40, "cost": 12}, {"id": "S2", "amount": 60, "cost": 20}],
        },
    }


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for name, doc in (("case14g8", case14g8()), ("micro1", micro1())):
        (OUT / f"{name}.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        print("wrote", OUT / f"{name}.json")
