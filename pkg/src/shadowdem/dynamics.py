"""Contact dynamics pipeline and the distributed world driver.

A step runs six globally fenced phases: broad-phase candidate search,
narrow-phase contact geometry, contact resolution, force reduction (one
exchange), integration, and shadow synchronization (one or two exchanges,
protocol dependent).

Distribution never changes physics.  Three rules make that hold exactly:

* every pair candidate is evaluated from copies that are bitwise equal to
  their masters, so any rank computing a contact gets identical numbers;
* a pair contact is resolved only on the rank that owns the contact point
  (for spheres, the midpoint of the overlap lens), which both guarantees
  uniqueness and, because the lens lies inside both spheres, guarantees
  that the resolving rank holds copies of both particles;
* per-contact contributions are summed by sorted partner key on the owner,
  so the total force on a particle is bitwise identical no matter how many
  ranks took part or which protocol synchronized them.

Wall contacts are resolved on the rank owning the particle.  The contact
force is a damped linear normal model, F = max(kn*delta - gamma_n*v_n, 0)
along the center line; normal contact on spheres exerts no torque, so
angular state changes only if torques arrive from elsewhere.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import (
    AssumptionViolated,
    DegenerateCenters,
    DisplacementGuard,
)
from .geometry import DomainBox, min_image, wrap_position
from .metrics import StepRecord
from .partition import build_partition, owner_indices, owner_of
from .store import Particle, ParticleStore, ROLE_MASTER, reduce_forces
from .sync import required_startup_syncs, sync_next_neighbor, sync_shadow_owners
from .transport import SequentialRunner, ThreadedRunner, Transport

# half of the 26 cell offsets; visiting each unordered cell pair once
_HALF_OFFSETS = [o for o in product((-1, 0, 1), repeat=3) if o > (0, 0, 0)]


@dataclass
class Wall:
    """Infinite plane boundary.  The normal points into the domain."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=np.float64)
        n = np.asarray(self.normal, dtype=np.float64)
        self.normal = n / np.linalg.norm(n)


@dataclass
class ContactParams:
    """Damped linear normal contact model plus the step size and gravity."""

    kn: float
    gamma_n: float
    dt: float
    gravity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.kn < 0 or self.gamma_n < 0:
            raise ValueError("contact coefficients must be nonnegative")
        self.gravity = np.asarray(self.gravity, dtype=np.float64)


@dataclass
class Contact:
    """One resolved sphere pair, oriented from the lower to the higher id."""

    pid_a: int
    pid_b: int
    normal: np.ndarray
    penetration: float
    force: float
    point: np.ndarray


def pair_contact(
    pos_a,
    vel_a,
    r_a,
    pid_a,
    pos_b,
    vel_b,
    r_b,
    pid_b,
    params: ContactParams,
    domain: DomainBox,
) -> Contact | None:
    """Contact between two spheres, or None when they do not overlap.

    Produces numbers bitwise identical to the batched pipeline, so tests
    can use it as a reference for any single pair.
    """
    if pid_a > pid_b:
        pos_a, vel_a, r_a, pid_a, pos_b, vel_b, r_b, pid_b = (
            pos_b,
            vel_b,
            r_b,
            pid_b,
            pos_a,
            vel_a,
            r_a,
            pid_a,
        )
    delta = min_image(
        np.asarray(pos_b, dtype=np.float64) - np.asarray(pos_a, dtype=np.float64), domain
    ).reshape(1, 3)
    # the same einsum kernels as the batched narrow phase, so the low-order
    # bits agree and tests can compare exactly
    d2 = float(np.einsum("ij,ij->i", delta, delta)[0])
    rsum = float(r_a) + float(r_b)
    if not d2 < rsum * rsum:
        return None
    dist = np.sqrt(np.array([d2]))
    if float(dist[0]) < 1e-12:
        raise DegenerateCenters(f"particles {pid_a} and {pid_b} are concentric")
    normal = delta / dist[:, None]
    pen = rsum - dist
    dv = (np.asarray(vel_b, dtype=np.float64) - np.asarray(vel_a, dtype=np.float64)).reshape(1, 3)
    v_n = np.einsum("ij,ij->i", dv, normal)
    force = np.maximum(params.kn * pen - params.gamma_n * v_n, 0.0)
    point = wrap_position(
        np.asarray(pos_a, dtype=np.float64) + normal[0] * (float(r_a) - float(pen[0]) / 2),
        domain,
    )
    return Contact(pid_a, pid_b, normal[0], float(pen[0]), float(force[0]), point)


class World:
    """All ranks of one distributed simulation, driven in lockstep."""

    def __init__(
        self,
        domain: DomainBox,
        grid,
        params: ContactParams,
        protocol: str = "nns",
        transport_mode: str = "sequential",
        walls=(),
        trace: bool = False,
    ):
        if protocol not in ("nns", "sos"):
            raise ValueError(f"unknown protocol {protocol!r}")
        self.part = build_partition(domain, grid)
        self.params = params
        self.protocol = protocol
        self.walls = list(walls)
        n = self.part.n_ranks
        self.stores = [ParticleStore(r) for r in range(n)]
        self.caches: list[dict] = [dict() for _ in range(n)]
        self.transport = Transport(n)
        if transport_mode == "sequential":
            self.runner = SequentialRunner()
        elif transport_mode == "threaded":
            self.runner = ThreadedRunner(n)
        else:
            raise ValueError(f"unknown transport mode {transport_mode!r}")
        self.trace: list | None = [] if trace else None
        self.min_radius = math.inf
        self.max_radius = 0.0
        self.step_index = 0
        self.step_records: list[StepRecord] = []
        self._cand: list = [None] * n
        self._contacts: list = [None] * n

    # -- population ----------------------------------------------------------

    def insert(self, particles) -> None:
        if isinstance(particles, Particle):
            particles = [particles]
        for p in particles:
            p.pos = wrap_position(np.asarray(p.pos, dtype=np.float64), self.part.domain)
            if self.protocol == "nns" and p.radius >= self.part.min_edge:
                raise AssumptionViolated(
                    f"next-neighbor sync cannot host radius {p.radius} on subdomains "
                    f"with smallest edge {self.part.min_edge}; use the shadow-owner protocol"
                )
            owner = owner_of(self.part, p.pos)
            self.stores[owner].insert_master(p, self.part)
            self.min_radius = min(self.min_radius, p.radius)
            self.max_radius = max(self.max_radius, p.radius)

    def startup_sync(self) -> int:
        """Run enough sync rounds to build full shadow coverage from scratch."""
        rounds = required_startup_syncs(self.max_radius, self.part.min_edge)
        for _ in range(rounds):
            self.sync()
        return rounds

    # -- stepping ------------------------------------------------------------

    def sync(self) -> None:
        if self.protocol == "nns":
            sync_next_neighbor(self)
        else:
            sync_shadow_owners(self)

    def step(self, n_steps: int = 1) -> None:
        for _ in range(n_steps):
            self._step_once()

    def _step_once(self) -> None:
        tp = self.transport
        n = self.part.n_ranks
        msgs0, blocks0, bytes0 = tp.messages_total, tp.blocks_total, tp.bytes_total
        stamps = [time.perf_counter()]
        self.runner.map(self._broad, n)
        stamps.append(time.perf_counter())
        self.runner.map(self._narrow, n)
        stamps.append(time.perf_counter())
        self.runner.map(self._resolve, n)
        stamps.append(time.perf_counter())
        reduce_forces(self.stores, tp, self.runner)
        stamps.append(time.perf_counter())
        self.runner.map(self._integrate, n)
        stamps.append(time.perf_counter())
        self.sync()
        stamps.append(time.perf_counter())
        d = np.diff(stamps)
        self.step_records.append(
            StepRecord(
                step=self.step_index,
                broad=float(d[0]),
                narrow=float(d[1]),
                resolve=float(d[2]),
                reduce=float(d[3]),
                integrate=float(d[4]),
                sync=float(d[5]),
                messages=tp.messages_total - msgs0,
                blocks=tp.blocks_total - blocks0,
                bytes=tp.bytes_total - bytes0,
                shadows=self.shadow_total(),
            )
        )
        self.step_index += 1

    # -- phase 1: broad ------------------------------------------------------

    def _broad(self, rank: int) -> None:
        st = self.stores[rank]
        n = st.count
        st.force[:n] = 0.0
        st.torque[:n] = 0.0
        empty = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
        if n < 2:
            self._cand[rank] = empty
            return
        part = self.part
        dom = part.domain
        box = part.box(rank)
        pos = st.pos[:n]
        radius = st.radius[:n]
        upos = min_image(pos - box.center, dom) + box.center

        spanning = [dom.periodic[a] and part.grid[a] == 1 for a in range(3)]
        safe_r = math.inf
        for a in range(3):
            if dom.periodic[a] and not spanning[a]:
                safe_r = min(safe_r, (dom.extent[a] - box.extent[a]) / 2)
        small = (2 * radius <= part.min_edge) & (radius <= safe_r)

        pi: list[int] = []
        pj: list[int] = []
        srows = np.flatnonzero(small)
        if len(srows) >= 2:
            cell = float(2 * radius[srows].max())
            idx = np.empty((len(srows), 3), dtype=np.int64)
            n_cells = [0, 0, 0]
            for a in range(3):
                if spanning[a]:
                    n_cells[a] = max(1, int(dom.extent[a] // cell))
                    eff = dom.extent[a] / n_cells[a]
                    idx[:, a] = (
                        np.floor((upos[srows, a] - dom.lo[a]) / eff).astype(np.int64)
                        % n_cells[a]
                    )
                else:
                    idx[:, a] = np.floor((upos[srows, a] - dom.lo[a]) / cell).astype(np.int64)
            cells: dict[tuple, list[int]] = {}
            for row, key in zip(srows.tolist(), map(tuple, idx.tolist())):
                cells.setdefault(key, []).append(row)
            alias = any(spanning[a] and n_cells[a] <= 2 for a in range(3))
            dedupe: set | None = set() if alias else None
            for key, members in cells.items():
                for i, row in enumerate(members[:-1]):
                    rest = members[i + 1 :]
                    pi.extend([row] * len(rest))
                    pj.extend(rest)
                for off in _HALF_OFFSETS:
                    nk = []
                    for a in range(3):
                        c = key[a] + off[a]
                        if spanning[a]:
                            c %= n_cells[a]
                        nk.append(c)
                    nk = tuple(nk)
                    if nk == key:
                        continue
                    other = cells.get(nk)
                    if not other:
                        continue
                    if dedupe is None:
                        for row in members:
                            pi.extend([row] * len(other))
                            pj.extend(other)
                    else:
                        for row in members:
                            for o in other:
                                pair = (row, o) if row < o else (o, row)
                                if pair not in dedupe:
                                    dedupe.add(pair)
                                    pi.append(pair[0])
                                    pj.append(pair[1])

        # oversize copies are paired against everything, exactly
        orows = np.flatnonzero(~small)
        if len(orows):
            every = np.arange(n)
            for o in orows.tolist():
                mask = (every != o) & (small | (every > o))
                partners = every[mask]
                pi.extend([o] * len(partners))
                pj.extend(partners.tolist())

        self._cand[rank] = (
            (np.array(pi, dtype=np.int64), np.array(pj, dtype=np.int64))
            if pi
            else empty
        )

    # -- phase 2: narrow -----------------------------------------------------

    def _narrow(self, rank: int) -> None:
        st = self.stores[rank]
        ai, bj = self._cand[rank]
        none = (
            np.zeros(0, dtype=np.int64),
            np.zeros(0, dtype=np.int64),
            np.zeros((0, 3)),
            np.zeros(0),
            np.zeros((0, 3)),
        )
        if len(ai) == 0:
            self._contacts[rank] = none
            return
        dom = self.part.domain
        ids = st.ids
        swap = ids[ai] > ids[bj]
        aa = np.where(swap, bj, ai)
        bb = np.where(swap, ai, bj)
        delta = min_image(st.pos[bb] - st.pos[aa], dom)
        d2 = np.einsum("ij,ij->i", delta, delta)
        rsum = st.radius[aa] + st.radius[bb]
        hit = d2 < rsum * rsum
        if not hit.any():
            self._contacts[rank] = none
            return
        aa, bb, delta, d2, rsum = aa[hit], bb[hit], delta[hit], d2[hit], rsum[hit]
        dist = np.sqrt(d2)
        if (dist < 1e-12).any():
            k = int(np.argmin(dist))
            raise DegenerateCenters(
                f"particles {int(ids[aa[k]])} and {int(ids[bb[k]])} are concentric"
            )
        normal = delta / dist[:, None]
        pen = rsum - dist
        v_n = np.einsum("ij,ij->i", st.vel[bb] - st.vel[aa], normal)
        force = np.maximum(self.params.kn * pen - self.params.gamma_n * v_n, 0.0)
        point = wrap_position(
            st.pos[aa] + normal * (st.radius[aa] - pen / 2)[:, None], dom
        )
        self._contacts[rank] = (aa, bb, normal, force, point)

    # -- phase 3: resolve ----------------------------------------------------

    def _resolve(self, rank: int) -> None:
        st = self.stores[rank]
        aa, bb, normal, force, point = self._contacts[rank]
        if len(aa):
            mine = owner_indices(self.part, point) == rank
            if mine.any():
                aa, bb = aa[mine], bb[mine]
                fn = force[mine, None] * normal[mine]
                ids_a = st.ids[aa]
                ids_b = st.ids[bb]
                zeros = np.zeros((len(aa), 3))
                st.add_force_entries(
                    np.concatenate([ids_a, ids_b]),
                    np.concatenate([ids_b, ids_a]),
                    np.concatenate([-fn, fn]),
                    np.concatenate([zeros, zeros]),
                )
        if self.walls:
            rows = st.master_rows()
            if len(rows):
                pos = st.pos[rows]
                vel = st.vel[rows]
                radius = st.radius[rows]
                for w, wall in enumerate(self.walls):
                    s = (pos - wall.point) @ wall.normal
                    pen = radius - s
                    hit = pen > 0
                    if not hit.any():
                        continue
                    v_n = vel[hit] @ wall.normal
                    f = np.maximum(
                        self.params.kn * pen[hit] - self.params.gamma_n * v_n, 0.0
                    )
                    targets = st.ids[rows[hit]]
                    st.add_force_entries(
                        targets,
                        np.full(len(targets), -1 - w, dtype=np.int64),
                        f[:, None] * wall.normal,
                        np.zeros((len(targets), 3)),
                    )

    # -- phase 5: integrate ----------------------------------------------------

    def _integrate(self, rank: int) -> None:
        st = self.stores[rank]
        rows = st.master_rows()
        if len(rows) == 0:
            return
        dt = self.params.dt
        inv_mass = st.inv_mass[rows]
        acc = st.force[rows] * inv_mass[:, None]
        movable = inv_mass > 0
        acc[movable] += self.params.gravity
        st.vel[rows] += acc * dt
        speed = np.sqrt(np.max(np.einsum("ij,ij->i", st.vel[rows], st.vel[rows])))
        if speed * dt >= self.min_radius:
            raise DisplacementGuard(
                f"rank {rank}: step displacement {speed * dt:.6g} reaches the "
                f"smallest radius {self.min_radius:.6g}; shadows could be outrun"
            )
        st.pos[rows] = wrap_position(st.pos[rows] + st.vel[rows] * dt, self.part.domain)
        r2 = st.radius[rows] ** 2
        st.angvel[rows] += st.torque[rows] * (2.5 * inv_mass / r2)[:, None] * dt
        omega = st.angvel[rows]
        theta = np.sqrt(np.einsum("ij,ij->i", omega, omega)) * dt
        spin = theta > 0
        if spin.any():
            sub = rows[spin]
            axis = omega[spin] / (theta[spin] / dt)[:, None]
            half = theta[spin] / 2
            dw = np.cos(half)
            dv = axis * np.sin(half)[:, None]
            q = st.quat[sub]
            w2, v2 = q[:, 0], q[:, 1:]
            nw = dw * w2 - np.einsum("ij,ij->i", dv, v2)
            nv = dw[:, None] * v2 + w2[:, None] * dv + np.cross(dv, v2)
            out = np.concatenate([nw[:, None], nv], axis=1)
            st.quat[sub] = out / np.linalg.norm(out, axis=1, keepdims=True)

    # -- inspection ------------------------------------------------------------

    def total_masters(self) -> int:
        return sum(len(st.master_rows()) for st in self.stores)

    def shadow_total(self) -> int:
        return sum(len(st.shadow_rows()) for st in self.stores)

    def masters_frame(self) -> dict:
        """Global master state gathered and sorted by particle id.

        The force column is the step's reduced contact sum as seen by the
        integrating rank.  It is consumed before ownership moves, so a
        master that migrated during the final sync reports zero force;
        positions and velocities are always authoritative."""
        ids, pos, vel, force = [], [], [], []
        for st in self.stores:
            rows = st.master_rows()
            ids.append(st.ids[rows])
            pos.append(st.pos[rows])
            vel.append(st.vel[rows])
            force.append(st.force[rows])
        ids = np.concatenate(ids)
        order = np.argsort(ids, kind="stable")
        return {
            "ids": ids[order],
            "pos": np.concatenate(pos)[order],
            "vel": np.concatenate(vel)[order],
            "force": np.concatenate(force)[order],
        }

    def momentum(self) -> np.ndarray:
        """Total linear momentum of all masters, summed exactly."""
        terms = [[], [], []]
        for st in self.stores:
            rows = st.master_rows()
            if len(rows) == 0:
                continue
            inv_mass = st.inv_mass[rows]
            sel = rows[inv_mass > 0]
            if len(sel) == 0:
                continue
            mom = st.vel[sel] / st.inv_mass[sel][:, None]
            for a in range(3):
                terms[a].extend(mom[:, a].tolist())
        return np.array([math.fsum(t) for t in terms])

    def snapshot(self) -> list[list[str]]:
        return [st.snapshot_rows() for st in self.stores]

    def close(self) -> None:
        self.runner.close()
