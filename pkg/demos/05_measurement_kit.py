"""The measurement tooling: rate sweeps and scaling efficiencies.

Timing claims need numbers, so the harness exposes the same throughput
metric everywhere: particle updates per core-second.  This demo times a
small bidisperse sweep over big-particle radii and partition grids, then
derives weak and strong efficiency figures from two sparse runs.
"""

import time
from dataclasses import replace

from shadowdem import default_config, pupcs, run, strong_efficiency, sweep_bidisperse

base = replace(default_config("large"), cells=(10, 10, 10), spacing=4.0)
rows = sweep_bidisperse(
    base, radii=[5.0, 10.0], protocols=["nns", "sos"], grids=[(2, 2, 2), (4, 4, 4)], steps=10
)
print("bidisperse sweep, 40^3 block, rates in particle updates per core-second")
print(f"{'radius':>6} {'edge':>5} {'nns':>7} {'sos':>7} {'ratio':>6}")
table = {(r["radius"], r["edge"], r["strategy"]): r["pupcs"] for r in rows}
for radius in (5.0, 10.0):
    for edge in (20.0, 10.0):
        nns = table.get((radius, edge, "nns"))
        sos = table.get((radius, edge, "sos"))
        if nns is None:
            print(f"{radius:6g} {edge:5g} {'--':>7} {sos:7.0f}  (radius too big for nns)")
        else:
            print(f"{radius:6g} {edge:5g} {nns:7.0f} {sos:7.0f} {sos / nns:6.2f}")

print()
cfg = replace(default_config("sparse"), cells=(12, 12, 12), steps=30)
times = {}
for grid in ((1, 1, 1), (2, 2, 2)):
    t0 = time.perf_counter()
    metrics, _ = run(replace(cfg, grid=grid))
    times[grid] = time.perf_counter() - t0
    print(
        f"sparse on {metrics.cores} ranks: {times[grid]:.2f} s wall, "
        f"{pupcs(len(metrics.records), metrics.particles, metrics.seconds, metrics.cores):.0f} rate"
    )

eff = strong_efficiency(times[(1, 1, 1)], times[(2, 2, 2)], 8)
print(f"strong efficiency on 8 in-process ranks: {eff:.2f}")
print("(in-process ranks share one CPU, so this gauges overhead, not speedup)")
