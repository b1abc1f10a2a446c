"""Smoke test for the pyreplicore extension.

Build and install it first, e.g. `maturin build --release` in crates/python
and `pip install` the resulting wheel.
"""

import math
import random

import pyreplicore as rc


def check(name, ok):
    print(f"{name:<28} {'ok' if ok else 'FAILED'}")
    return ok


def main():
    results = []

    a = rc.coin_test(0.3, 0.6, 0.2, 0.05, bias=0.45, seed=7, sample_seed=1)
    b = rc.coin_test(0.3, 0.6, 0.2, 0.05, bias=0.45, seed=7, sample_seed=1)
    results.append(check("coin test deterministic", a == b and a["verdict"] in ("accept", "reject")))

    rng = random.Random(3)
    out = rc.coin_test(0.3, 0.6, 0.2, 0.05, coin=lambda: rng.random() < 0.9, seed=1)
    results.append(check("callable coin", out["verdict"] == "accept" and out["samples_used"] > 0))

    q = rc.stat_query(0.1, 0.3, 0.05, bias=0.42, seed=2)
    results.append(check("stat query", abs(q["value"] - 0.42) <= 0.1))

    hh = rc.heavy_hitters({"a": 0.6, "b": 0.3, "c": 0.1}, 0.45, 0.1, 0.3, 0.05, seed=4)
    results.append(check("heavy hitters", hh["set"] == ["a"]))

    nc = rc.n_coin([0.1, 0.9, 0.2, 0.8], 0.3, 0.6, 0.3, 0.05, seed=5)
    results.append(check("n coin", nc["accepted"] == [1, 3]))

    lat = rc.Lattice([[1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    ratio = lat.covering_radius / lat.packing_radius
    results.append(check("hexagonal lattice", len(lat.relevant_vectors) == 6 and abs(ratio - 2 / math.sqrt(3)) < 1e-6))
    coeffs, _ = lat.closest([0.9, 0.1])
    results.append(check("closest point", coeffs == [1, 0]))

    me = rc.mean_estimate([0.2, -0.4], 0.5, 0.3, 0.05, seed=6)
    dist = math.dist(me["estimate"], [0.2, -0.4])
    results.append(check("mean estimate", dist <= 0.5))

    pm = rc.pseudo_max([0.9] + [0.2] * 15, 2, 0.1, 0.3, 0.05, seed=8)
    results.append(check("pseudo max", 0 in pm["set"]))

    try:
        rc.coin_test(0.6, 0.3, 0.2, 0.05, bias=0.5)
        results.append(check("invalid parameters raise", False))
    except rc.ReplicoreError:
        results.append(check("invalid parameters raise", True))

    ids = [p for p, _ in rc.list_presets()]
    results.append(check("presets listed", len(ids) == 13))
    report = rc.run_preset("c13", trials=100, seed=1)
    results.append(check("preset run", report["fail"] is False))

    config = {
        "algorithm": {
            "algorithm": "coin_test",
            "p0": 0.3,
            "q0": 0.6,
            "rho": 0.3,
            "delta": 0.05,
            "bias": {"kind": "uniform", "lo": 0.3, "hi": 0.6},
        },
        "trials": 200,
        "seed": 9,
    }
    reports = rc.sweep_config(config, "rho", [0.3, 0.15])
    results.append(check("sweep", reports[1]["samples"]["mean"] > reports[0]["samples"]["mean"]))

    print(f"{sum(results)}/{len(results)} checks passed")
    raise SystemExit(0 if all(results) else 1)


if __name__ == "__main__":
    main()
