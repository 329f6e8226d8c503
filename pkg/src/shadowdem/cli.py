"""Command line front end.

Three subcommands cover the whole workflow:

    shadowdem run --scenario sparse --grid 2,2,2 --steps 100 --out results/
    shadowdem compare results_a/snapshot.txt results_b/snapshot.txt
    shadowdem sweep --radii 5,10,15 --protocols nns,sos --grids 4,4,4;8,8,8 \
        --steps 20 --out sweep.csv

`run` executes one configured simulation and writes config.txt,
metrics.csv, and snapshot.txt into the output directory.  `compare`
checks two snapshots for agreement and exits nonzero on mismatch.
`sweep` times the large scenario over big-particle radii, protocols, and
partition grids, writing one rate row per combination.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import IdSetMismatch, ShadowDemError
from .harness import compare_snapshots, run, sweep_bidisperse
from .scenarios import ScenarioConfig, default_config


def _triple(text: str) -> tuple:
    parts = tuple(int(v) for v in text.split(","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated ints, got {text!r}")
    return parts


def _grid_list(text: str) -> list:
    return [_triple(chunk) for chunk in text.split(";") if chunk]


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="shadowdem",
        description="Distributed rigid-sphere dynamics with interchangeable "
        "shadow synchronization protocols.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="execute one simulation")
    pr.add_argument("--config", help="configuration file (key = value lines)")
    pr.add_argument(
        "--scenario",
        choices=["sparse", "dense", "large"],
        help="start from this scenario's default configuration",
    )
    pr.add_argument("--grid", type=_triple, help="rank grid, e.g. 2,2,2")
    pr.add_argument("--cells", type=_triple, help="lattice cells, e.g. 12,12,12")
    pr.add_argument("--steps", type=int, help="number of time steps")
    pr.add_argument("--protocol", choices=["nns", "sos"], help="sync protocol")
    pr.add_argument(
        "--transport",
        choices=["sequential", "threaded"],
        help="rank execution mode",
    )
    pr.add_argument("--seed", type=int, help="random seed for initial velocities")
    pr.add_argument("--out", help="directory for config.txt, metrics.csv, snapshot.txt")

    pc = sub.add_parser("compare", help="compare two snapshot files")
    pc.add_argument("snapshot_a")
    pc.add_argument("snapshot_b")

    ps = sub.add_parser("sweep", help="rate sweep over radii, protocols, grids")
    ps.add_argument("--radii", required=True, help="comma list, e.g. 5,10,15")
    ps.add_argument("--protocols", default="nns,sos", help="comma list of protocols")
    ps.add_argument(
        "--grids", type=_grid_list, required=True, help="semicolon list, e.g. 4,4,4;8,8,8"
    )
    ps.add_argument("--cells", type=_triple, help="lattice cells for the block")
    ps.add_argument("--steps", type=int, default=10, help="steps per combination")
    ps.add_argument("--out", help="CSV file for the rate rows")
    return p


def _cmd_run(args) -> int:
    if args.config:
        cfg = ScenarioConfig.from_file(args.config)
    elif args.scenario:
        cfg = default_config(args.scenario)
    else:
        print("run needs --config or --scenario", file=sys.stderr)
        return 2
    overrides = {}
    for name in ("grid", "cells", "steps", "protocol", "transport", "seed"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if overrides:
        cfg = replace(cfg, **overrides)
    metrics, _ = run(cfg, out_dir=args.out)
    print(
        f"{cfg.scenario}: {metrics.particles} particles, {len(metrics.records)} steps, "
        f"{metrics.cores} cores, {metrics.seconds:.3f} s, "
        f"{metrics.rate:.0f} particle updates per core-second"
    )
    if args.out:
        print(f"artifacts written to {args.out}")
    return 0


def _cmd_compare(args) -> int:
    try:
        worst = compare_snapshots(args.snapshot_a, args.snapshot_b)
    except IdSetMismatch as e:
        print(f"mismatch: {e}", file=sys.stderr)
        return 1
    print(f"largest state difference: {worst!r}")
    return 0 if worst == 0.0 else 1


def _cmd_sweep(args) -> int:
    base = default_config("large")
    if args.cells:
        base = replace(base, cells=args.cells)
    radii = [float(v) for v in args.radii.split(",")]
    protocols = [v.strip() for v in args.protocols.split(",")]
    rows = sweep_bidisperse(base, radii, protocols, args.grids, args.steps, args.out)
    for row in rows:
        print(
            f"radius {row['radius']:g} {row['strategy']} edge {row['edge']:g}: "
            f"{row['pupcs']:.0f} particle updates per core-second"
        )
    if args.out:
        print(f"rows written to {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_sweep(args)
    except ShadowDemError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
