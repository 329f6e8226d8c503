"""Benchmark scenario builders and their plain-text configuration.

Three populations exercise the engine from different directions:

* sparse: a rattling gas on a simple cubic lattice, mostly ballistic,
  contacts rare.  Walls by default, fully periodic on request.
* dense: a tilted hexagonally close packed bed resting on a floor wall,
  driven by gravity, every particle in sustained contact.  Periodic in
  x and y, walls in z.
* large: a periodic block of lattice gas with one big particle in the
  center whose radius may exceed a subdomain edge, the case that needs
  the shadow-owner protocol.  The filler is simple cubic by default and
  hexagonal close packed on request for collision-heavy variants.

Builders are grid independent: particle ids, positions, and velocity
draws depend only on the scenario parameters, never on how many ranks
will host them, so the same configuration produces the same physics on
any partition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .dynamics import ContactParams, Wall, World
from .errors import ConfigMismatch
from .geometry import make_domain, min_image
from .store import Particle, make_particle_id

_SQ32 = math.sqrt(3.0) / 2.0
_SQ23 = math.sqrt(2.0 / 3.0)


@dataclass
class ScenarioConfig:
    scenario: str = "sparse"
    cells: tuple = (12, 12, 12)
    grid: tuple = (2, 2, 2)
    spacing: float = 1.0
    radius: float = 0.4
    big_radius: float = 9.0
    v0: float = 0.15
    dt: float = 0.5
    kn: float = 0.25
    gamma_n: float = 0.05
    g0: float = 1.0
    tilt_deg: float = 30.0
    packing: str = "sc"
    periodic: bool = False
    protocol: str = "nns"
    transport: str = "sequential"
    steps: int = 100
    seed: int = 7

    def to_file(self, path) -> None:
        with open(path, "w") as fh:
            for f in fields(self):
                v = getattr(self, f.name)
                if isinstance(v, tuple):
                    v = ",".join(str(x) for x in v)
                fh.write(f"{f.name} = {v}\n")

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        known = {f.name: f for f in fields(cls)}
        defaults = cls()
        values = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigMismatch(f"{path}:{lineno}: expected 'key = value'")
                key, _, val = line.partition("=")
                key, val = key.strip(), val.strip()
                if key not in known:
                    raise ConfigMismatch(f"{path}:{lineno}: unknown key {key!r}")
                ref = getattr(defaults, key)
                try:
                    if isinstance(ref, tuple):
                        values[key] = tuple(int(x) for x in val.split(","))
                    elif isinstance(ref, bool):
                        if val.lower() not in ("true", "false"):
                            raise ValueError(val)
                        values[key] = val.lower() == "true"
                    elif isinstance(ref, int):
                        values[key] = int(val)
                    elif isinstance(ref, float):
                        values[key] = float(val)
                    else:
                        values[key] = val
                except ValueError:
                    raise ConfigMismatch(
                        f"{path}:{lineno}: cannot parse {val!r} for {key!r}"
                    ) from None
        cfg = cls(**values)
        validate_config(cfg)
        return cfg


def default_config(scenario: str) -> ScenarioConfig:
    if scenario == "sparse":
        return ScenarioConfig()
    if scenario == "dense":
        return ScenarioConfig(
            scenario="dense",
            cells=(10, 10, 5),
            grid=(2, 2, 1),
            radius=0.5,
            v0=0.1,
            dt=0.01,
            kn=500.0,
            gamma_n=2.0,
        )
    if scenario == "large":
        return ScenarioConfig(
            scenario="large",
            cells=(24, 24, 24),
            grid=(2, 2, 2),
            radius=0.4,
            big_radius=9.0,
            dt=0.1,
            kn=5.0,
            gamma_n=0.2,
            periodic=True,
            protocol="sos",
        )
    raise ConfigMismatch(f"unknown scenario {scenario!r}")


def validate_config(cfg: ScenarioConfig) -> None:
    if cfg.scenario not in ("sparse", "dense", "large"):
        raise ConfigMismatch(f"unknown scenario {cfg.scenario!r}")
    if cfg.protocol not in ("nns", "sos"):
        raise ConfigMismatch(f"unknown protocol {cfg.protocol!r}")
    if cfg.transport not in ("sequential", "threaded"):
        raise ConfigMismatch(f"unknown transport {cfg.transport!r}")
    if len(cfg.cells) != 3 or any(c <= 0 for c in cfg.cells):
        raise ConfigMismatch(f"cells must be three positive counts, got {cfg.cells}")
    if len(cfg.grid) != 3 or any(g <= 0 for g in cfg.grid):
        raise ConfigMismatch(f"grid must be three positive counts, got {cfg.grid}")
    if cfg.radius <= 0 or cfg.dt <= 0 or cfg.spacing <= 0:
        raise ConfigMismatch("radius, spacing, and dt must be positive")
    if cfg.scenario == "dense" and cfg.cells[1] % 2:
        raise ConfigMismatch(
            "dense packing needs an even row count to close periodically in y"
        )
    if cfg.packing not in ("sc", "hcp"):
        raise ConfigMismatch(f"unknown packing {cfg.packing!r}")
    if cfg.packing == "hcp" and cfg.scenario != "large":
        raise ConfigMismatch("the hcp filler only applies to the large scenario")
    if cfg.scenario == "large" and cfg.big_radius <= 0:
        raise ConfigMismatch("big_radius must be positive")


def _unit_density_inv_mass(radius: float) -> float:
    return 1.0 / (4.0 / 3.0 * math.pi * radius**3)


def _sc_sites(cells, spacing: float) -> np.ndarray:
    """Simple cubic sites, z varying slowest and x fastest, centered in
    their lattice cells."""
    cx, cy, cz = cells
    k, j, i = np.meshgrid(
        np.arange(cz), np.arange(cy), np.arange(cx), indexing="ij"
    )
    sites = np.stack([i, j, k], axis=-1).reshape(-1, 3).astype(np.float64)
    return (sites + 0.5) * spacing


def build_sparse(cfg: ScenarioConfig):
    extent = np.array(cfg.cells, dtype=np.float64) * cfg.spacing
    domain = make_domain(extent, (cfg.periodic,) * 3)
    pos = _sc_sites(cfg.cells, cfg.spacing)
    rng = np.random.default_rng(cfg.seed)
    vel = rng.uniform(-cfg.v0, cfg.v0, (len(pos), 3))
    inv_mass = _unit_density_inv_mass(cfg.radius)
    particles = [
        Particle(make_particle_id(0, i), pos[i], vel[i], cfg.radius, inv_mass)
        for i in range(len(pos))
    ]
    walls = [] if cfg.periodic else _box_walls(domain)
    return domain, particles, walls, np.zeros(3)


def _box_walls(domain) -> list[Wall]:
    walls = []
    for a in range(3):
        lo_n = np.zeros(3)
        lo_n[a] = 1.0
        walls.append(Wall(domain.lo.copy(), lo_n))
        walls.append(Wall(domain.hi.copy(), -lo_n))
    return walls


def build_dense(cfg: ScenarioConfig):
    a = 2.0 * cfg.radius
    cx, cy, cz = cfg.cells
    extent = np.array([cx * a, cy * a * _SQ32, (cz - 1) * a * _SQ23 + a])
    domain = make_domain(extent, (True, True, False))
    sites = []
    for k in range(cz):
        for j in range(cy):
            for i in range(cx):
                x = (i + ((j + k) % 2) / 2.0) * a + a / 4.0
                y = (j + (k % 2) / 3.0) * a * _SQ32 + a * _SQ32 / 2.0
                z = k * a * _SQ23 + a / 2.0
                sites.append((x, y, z))
    pos = np.array(sites)
    inv_mass = _unit_density_inv_mass(cfg.radius)
    vel = np.array([cfg.v0, 0.0, 0.0])
    particles = [
        Particle(make_particle_id(0, i), pos[i], vel.copy(), cfg.radius, inv_mass)
        for i in range(len(pos))
    ]
    tilt = math.radians(cfg.tilt_deg)
    gravity = cfg.g0 * np.array([math.sin(tilt), 0.0, -math.cos(tilt)])
    floor = Wall(domain.lo.copy(), np.array([0.0, 0.0, 1.0]))
    lid = Wall(domain.hi.copy(), np.array([0.0, 0.0, -1.0]))
    return domain, particles, [floor, lid], gravity


def _hcp_filler_sites(extent, spacing: float) -> np.ndarray:
    """Hexagonal close packed sites with nearest-neighbor distance
    ``spacing``, offset from the box faces so every site lies strictly
    inside ``[0, extent)``.  Unlike the dense bed, the rows do not close
    around the periodic boundary; the row counts instead leave a wrapped
    gap of at least one spacing across every face, so no seam pair sits
    closer than a bulk pair."""
    sy = spacing * _SQ32
    sz = spacing * _SQ23
    nx = int(extent[0] / spacing + 1e-9)
    ny = int((extent[1] - spacing) / sy - 1.0 / 3.0 - 1e-9) + 1
    nz = int((extent[2] - spacing) / sz - 1e-9) + 1
    sites = []
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                x = (i + ((j + k) % 2) / 2.0) * spacing + spacing / 4.0
                y = (j + (k % 2) / 3.0) * sy + sy / 2.0
                z = k * sz + spacing / 2.0
                sites.append((x, y, z))
    return np.array(sites)


def build_large(cfg: ScenarioConfig):
    extent = np.array(cfg.cells, dtype=np.float64) * cfg.spacing
    domain = make_domain(extent, (cfg.periodic,) * 3)
    center = domain.lo + extent / 2.0
    if cfg.packing == "hcp":
        pos = _hcp_filler_sites(extent, cfg.spacing)
    else:
        pos = _sc_sites(cfg.cells, cfg.spacing)
    rng = np.random.default_rng(cfg.seed)
    vel = rng.uniform(-cfg.v0, cfg.v0, (len(pos) + 1, 3))
    sep = min_image(pos - center, domain)
    clearance = cfg.big_radius + cfg.radius
    keep = np.einsum("ij,ij->i", sep, sep) >= clearance * clearance
    particles = [
        Particle(
            make_particle_id(0, 0),
            center.copy(),
            vel[0],
            cfg.big_radius,
            _unit_density_inv_mass(cfg.big_radius),
        )
    ]
    inv_mass = _unit_density_inv_mass(cfg.radius)
    counter = 1
    for i in np.flatnonzero(keep):
        particles.append(
            Particle(make_particle_id(0, counter), pos[i], vel[i + 1], cfg.radius, inv_mass)
        )
        counter += 1
    return domain, particles, [], np.zeros(3)


_BUILDERS = {"sparse": build_sparse, "dense": build_dense, "large": build_large}


def build_scenario(cfg: ScenarioConfig, trace: bool = False) -> World:
    """Construct a fully populated world, not yet startup-synced."""
    validate_config(cfg)
    domain, particles, walls, gravity = _BUILDERS[cfg.scenario](cfg)
    params = ContactParams(kn=cfg.kn, gamma_n=cfg.gamma_n, dt=cfg.dt, gravity=gravity)
    world = World(
        domain,
        cfg.grid,
        params,
        protocol=cfg.protocol,
        transport_mode=cfg.transport,
        walls=walls,
        trace=trace,
    )
    world.insert(particles)
    return world


def near_cubic_grid(n_ranks: int) -> tuple[int, int, int]:
    """Factor a rank count into the most cube-like 3d grid."""
    if n_ranks <= 0:
        raise ValueError("rank count must be positive")
    best = (n_ranks, 1, 1)
    best_score = n_ranks
    for gx in range(1, n_ranks + 1):
        if n_ranks % gx:
            continue
        rest = n_ranks // gx
        for gy in range(1, rest + 1):
            if rest % gy:
                continue
            gz = rest // gy
            score = max(gx, gy, gz) / min(gx, gy, gz)
            if score < best_score:
                best_score = score
                best = tuple(sorted((gx, gy, gz), reverse=True))
    return best
