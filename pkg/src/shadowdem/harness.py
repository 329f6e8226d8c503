"""Run driver, snapshot artifacts, and cross-run checks.

A run builds a world from a scenario configuration, performs the startup
sync rounds, steps the configured number of times, and leaves behind
three artifacts when an output directory is given: the configuration as
written (config.txt), per-step timings and traffic (metrics.csv), and
the final particle state (snapshot.txt).

Snapshots print floats with repr, the shortest digit string that parses
back to the identical double, so textual equality of two snapshots means
bitwise equality of two simulations, and comparing snapshots from runs
on different rank counts is a meaningful determinism check.
"""

from __future__ import annotations

import csv
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import IdSetMismatch, InvariantViolation
from .geometry import sphere_overlaps_aabb
from .metrics import RunMetrics, pupcs
from .partition import owner_indices
from .scenarios import ScenarioConfig, build_scenario
from .store import ROLE_MASTER


def run(cfg: ScenarioConfig, out_dir=None):
    """Execute one configured run.  Returns (metrics, final master frame)."""
    world = build_scenario(cfg)
    world.startup_sync()
    particles = world.total_masters()
    world.step(cfg.steps)
    metrics = RunMetrics(
        particles=particles, cores=world.part.n_ranks, records=world.step_records
    )
    frame = world.masters_frame()
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cfg.to_file(out / "config.txt")
        metrics.to_csv(out / "metrics.csv")
        write_snapshot(world, out / "snapshot.txt")
    world.close()
    return metrics, frame


# -- snapshots -----------------------------------------------------------------


def write_snapshot(world, path) -> None:
    with open(path, "w") as fh:
        for rank, rows in enumerate(world.snapshot()):
            fh.write(f"# rank {rank}\n")
            for row in rows:
                fh.write(row + "\n")


def read_snapshot(path) -> dict:
    """Parse a snapshot into {pid: (role, owner, pos, vel, radius)}, keeping
    the master record when a particle appears on several ranks."""
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            pid_s, role, owner_s, pos_s, vel_s, r_s = line.split()
            pid = int(pid_s)
            rec = (
                role,
                int(owner_s),
                tuple(float(v) for v in pos_s.split(",")),
                tuple(float(v) for v in vel_s.split(",")),
                float(r_s),
            )
            if pid not in out or role == "master":
                out[pid] = rec
    return out


def compare_snapshots(path_a, path_b) -> float:
    """Largest absolute state difference between the masters of two
    snapshots.  Zero means the runs agree bitwise.  Raises IdSetMismatch
    when the two runs do not even contain the same particles."""
    a = read_snapshot(path_a)
    b = read_snapshot(path_b)
    masters_a = {pid for pid, rec in a.items() if rec[0] == "master"}
    masters_b = {pid for pid, rec in b.items() if rec[0] == "master"}
    if masters_a != masters_b:
        only_a = sorted(masters_a - masters_b)[:5]
        only_b = sorted(masters_b - masters_a)[:5]
        raise IdSetMismatch(
            f"snapshots hold different particles (a-only {only_a}, b-only {only_b})"
        )
    worst = 0.0
    for pid in masters_a:
        _, _, pos_a, vel_a, r_a = a[pid]
        _, _, pos_b, vel_b, r_b = b[pid]
        for va, vb in zip(pos_a + vel_a + (r_a,), pos_b + vel_b + (r_b,)):
            worst = max(worst, abs(va - vb))
    return worst


# -- invariant checking ----------------------------------------------------------


def check_consistency(world) -> dict:
    """Verify the full distributed bookkeeping against first principles.

    Checks that every particle has exactly one master sitting on the rank
    that owns its center, that shadows exist on exactly the subdomains the
    sphere overlaps, that every shadow knows its owner, and that every
    owner's registry matches reality.  Raises InvariantViolation on the
    first discrepancy; returns counts when all is well.
    """
    part = world.part
    masters = {}
    shadows: dict[int, dict[int, int]] = {}
    for st in world.stores:
        for pid, row in st.index.items():
            if st.role[row] == ROLE_MASTER:
                if pid in masters:
                    raise InvariantViolation(
                        f"particle {pid} has masters on ranks "
                        f"{masters[pid][0]} and {st.rank}"
                    )
                masters[pid] = (st.rank, st.pos[row].copy(), float(st.radius[row]))
            else:
                shadows.setdefault(pid, {})[st.rank] = int(st.owner[row])

    orphans = set(shadows) - set(masters)
    if orphans:
        raise InvariantViolation(f"shadows without any master: {sorted(orphans)[:5]}")

    pids = sorted(masters)
    pos = np.array([masters[p][1] for p in pids])
    rad = np.array([masters[p][2] for p in pids])
    own = np.array([masters[p][0] for p in pids])

    centers_owner = owner_indices(part, pos)
    misplaced = np.flatnonzero(centers_owner != own)
    if len(misplaced):
        p = pids[int(misplaced[0])]
        raise InvariantViolation(
            f"master of {p} sits on rank {masters[p][0]} but its center belongs "
            f"to rank {int(centers_owner[misplaced[0]])}"
        )

    overlap = np.zeros((len(pids), part.n_ranks), dtype=bool)
    for rank in range(part.n_ranks):
        overlap[:, rank] = sphere_overlaps_aabb(pos, rad, part.box(rank), part.domain)

    n_shadows = 0
    for k, pid in enumerate(pids):
        owner = int(own[k])
        expected = set(np.flatnonzero(overlap[k]).tolist()) - {owner}
        actual = shadows.get(pid, {})
        if set(actual) != expected:
            raise InvariantViolation(
                f"particle {pid}: shadows on {sorted(actual)} but sphere overlaps "
                f"{sorted(expected)}"
            )
        for rank, owner_field in actual.items():
            if owner_field != owner:
                raise InvariantViolation(
                    f"shadow of {pid} on rank {rank} names owner {owner_field}, "
                    f"actual owner is {owner}"
                )
        registry = world.stores[owner].registry[pid]
        if registry != expected:
            raise InvariantViolation(
                f"owner registry of {pid} lists {sorted(registry)}, "
                f"shadows exist on {sorted(expected)}"
            )
        n_shadows += len(actual)
    return {"masters": len(masters), "shadows": n_shadows}


# -- parameter sweeps -------------------------------------------------------------


def sweep_bidisperse(
    base: ScenarioConfig, radii, protocols, grids, steps: int, out_csv=None
) -> list[dict]:
    """Time the large scenario across big-particle radii, sync protocols,
    and partition grids.  Protocol-illegal combinations are skipped.  Rows
    carry the smallest subdomain edge so the radius/edge ratio each rate
    belongs to is explicit."""
    rows = []
    for radius in radii:
        for protocol in protocols:
            for grid in grids:
                cfg = replace(
                    base,
                    scenario="large",
                    big_radius=float(radius),
                    protocol=protocol,
                    grid=tuple(grid),
                    steps=steps,
                )
                extent = np.array(cfg.cells, dtype=np.float64) * cfg.spacing
                edge = float((extent / np.array(grid)).min())
                if protocol == "nns" and radius >= edge:
                    continue
                metrics, _ = run(cfg)
                rows.append(
                    {
                        "radius": float(radius),
                        "strategy": protocol,
                        "edge": edge,
                        "pupcs": metrics.rate,
                    }
                )
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["radius", "strategy", "edge", "pupcs"])
            w.writeheader()
            w.writerows(rows)
    return rows
