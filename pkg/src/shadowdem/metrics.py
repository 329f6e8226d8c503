"""Throughput and scaling metrics.

The headline rate is particle updates per core-second: how many
particle-step advances one core delivers per wall-clock second.  It is
comparable across runs of different sizes, durations, and rank counts,
which makes it the natural currency for both weak and strong scaling
studies.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields


def pupcs(steps: int, particles: int, seconds: float, cores: int) -> float:
    """Particle updates per core-second.  Raises ZeroDivisionError when no
    time was measured or no cores took part."""
    return steps * particles / (seconds * cores)


def weak_efficiency(t_one: float, t_many: float) -> float:
    """Weak scaling efficiency: per-core problem size fixed, so perfect
    scaling keeps the runtime flat."""
    return t_one / t_many


def strong_efficiency(t_one: float, t_many: float, cores: int) -> float:
    """Strong scaling efficiency: total problem size fixed, so perfect
    scaling divides the runtime by the core count."""
    return t_one / (cores * t_many)


@dataclass
class StepRecord:
    step: int
    broad: float
    narrow: float
    resolve: float
    reduce: float
    integrate: float
    sync: float
    messages: int
    blocks: int
    bytes: int
    shadows: int

    @property
    def total(self) -> float:
        return self.broad + self.narrow + self.resolve + self.reduce + self.integrate + self.sync


@dataclass
class RunMetrics:
    particles: int
    cores: int
    records: list[StepRecord]

    @property
    def seconds(self) -> float:
        return sum(r.total for r in self.records)

    @property
    def rate(self) -> float:
        return pupcs(len(self.records), self.particles, self.seconds, self.cores)

    def to_csv(self, path) -> None:
        names = [f.name for f in fields(StepRecord)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["total", "pupcs_running"])
            elapsed = 0.0
            for i, r in enumerate(self.records, start=1):
                elapsed += r.total
                running = pupcs(i, self.particles, elapsed, self.cores) if elapsed > 0 else 0.0
                w.writerow([getattr(r, n) for n in names] + [r.total, running])


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]
