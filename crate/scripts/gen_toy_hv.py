#!/usr/bin/env python3
"""Writes the toy_hv network and its 15-minute profiles into crates/orpf/data."""

import csv
import json
import math
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parent.parent / "crates" / "orpf" / "data"
STEPS = 192  # two days of quarter hours
SEED = 7

RING = ["H1", "H2", "H3", "H4", "H5", "H6"]
# (from, to, length km)
SPANS = [("H1", "H2", 28), ("H2", "H3", 22), ("H3", "H4", 35), ("H4", "H5", 18), ("H5", "H6", 30), ("H6", "H1", 25)]
GENS = [("W2", "H2", 80.0, "wind"), ("P3", "H3", 60.0, "pv"), ("W5", "H5", 100.0, "wind"), ("P6", "H6", 50.0, "pv")]
LOADS = [("M2", "H2", 55.0), ("M3", "H3", 40.0), ("M4", "H4", 60.0), ("M5", "H5", 30.0), ("M6", "H6", 45.0)]


def network():
    buses = [{"id": "X380", "vn": 380.0}, {"id": "X220", "vn": 220.0}]
    buses += [{"id": b, "vn": 110.0} for b in RING]
    lines = [
        {
            "id": f"L{a[1:]}{b[1:]}",
            "from_bus": a,
            "to_bus": b,
            "r": round(0.12 * km, 4),
            "x": round(0.39 * km, 4),
            "b": round(2.9 * km, 3),
            "imax": 0.6,
        }
        for a, b, km in SPANS
    ]
    tap = {"tap_dn": 0.015, "tap_neutral": 0, "tap_min": -12, "tap_max": 12}
    trafos = [
        {"id": "TA", "lv_bus": "H1", "hv_bus": "X380", "vn_lv": 110.0, "vn_hv": 380.0, "sn": 300.0,
         "vk_percent": 12.0, "vkr_percent": 0.25, "pfe_kw": 80.0, "i0_percent": 0.04, **tap},
        # two identical units in parallel; reduction merges them
        {"id": "TB1", "lv_bus": "H4", "hv_bus": "X220", "vn_lv": 110.0, "vn_hv": 220.0, "sn": 160.0,
         "vk_percent": 11.0, "vkr_percent": 0.3, "pfe_kw": 50.0, "i0_percent": 0.05, **tap},
        {"id": "TB2", "lv_bus": "H4", "hv_bus": "X220", "vn_lv": 110.0, "vn_hv": 220.0, "sn": 160.0,
         "vk_percent": 11.0, "vkr_percent": 0.3, "pfe_kw": 50.0, "i0_percent": 0.05, **tap},
    ]
    gens = [{"id": g, "bus": b, "p_max": p, "sn": round(p / 0.9, 3), "p": round(0.4 * p, 3)} for g, b, p, _ in GENS]
    loads = [{"id": m, "bus": b, "sn": round(p / 0.95, 3), "p": round(0.7 * p, 3), "q": round(0.2 * p, 3)} for m, b, p in LOADS]
    # spare feeder without rating, dropped by reduction
    loads.append({"id": "M1", "bus": "H1", "sn": 0.0})
    ext = [
        {"id": "E380", "bus": "X380", "vm_pu": 1.092, "va": 0.0},
        {"id": "E220", "bus": "X220", "vm_pu": 1.068, "va": -0.02},
    ]
    return {
        "format_version": 1,
        "name": "toy_hv",
        "s_base": 100.0,
        "buses": buses,
        "lines": lines,
        "trafos": trafos,
        "gens": gens,
        "loads": loads,
        "ext_grids": ext,
    }


def profiles(rng):
    t = np.arange(STEPS) / 96.0  # days
    day = t % 1.0
    load_shape = 0.65 + 0.25 * np.sin(2 * math.pi * (day - 0.3)) ** 2 + 0.1 * (day > 0.3) * (day < 0.85)
    pv_shape = np.clip(np.sin(math.pi * (day - 0.25) / 0.5), 0.0, None) * ((day > 0.25) & (day < 0.75))
    cols = {}
    for g, _, p, kind in GENS:
        if kind == "pv":
            cloud = np.clip(1.0 - 0.3 * rng.random(STEPS), 0.4, 1.0)
            v = p * 0.85 * pv_shape * cloud
        else:
            walk = np.cumsum(rng.normal(0.0, 0.06, STEPS))
            v = p * np.clip(0.45 + 0.35 * np.sin(2 * math.pi * t / 1.7 + rng.random() * 6) + 0.2 * np.tanh(walk), 0.0, 0.95)
        cols[f"gen.{g}.p_mw"] = v
    for m, _, p in LOADS:
        noise = 1.0 + 0.05 * rng.normal(size=STEPS)
        pl = p * load_shape * noise
        cols[f"load.{m}.p_mw"] = pl
        cols[f"load.{m}.q_mvar"] = pl * (0.25 + 0.05 * rng.random(STEPS))
    return cols


def main():
    rng = np.random.default_rng(SEED)
    (OUT / "toy_hv.json").write_text(json.dumps(network(), indent=2) + "\n")
    cols = profiles(rng)
    names = list(cols)
    with open(OUT / "toy_hv_profiles.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step"] + names)
        for i in range(STEPS):
            w.writerow([i] + [f"{cols[n][i]:.4f}" for n in names])


if __name__ == "__main__":
    main()
