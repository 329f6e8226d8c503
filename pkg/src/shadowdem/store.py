"""Per-rank particle storage.

Each rank keeps one store holding its master particles (authoritative
copies it integrates) and shadow particles (read-only images of masters
that live on other ranks).  Rows live in flat numpy columns; removal
swaps the last row in, so row order is an implementation detail and
nothing observable may depend on it.

Masters carry a registry: the set of ranks currently holding a shadow of
that particle.  Shadows carry the owner rank instead.  The store also
remembers, per shadow, which ranks asked for its creation (the requesters),
so a later deletion can notify every rank whose bookkeeping mentions it.

Force accumulation is two-layered.  add_force_contribution() increments
the plain force/torque columns immediately, which is what single-rank
callers and tests inspect.  It also appends one (target, partner key,
force, torque) entry to a side buffer.  reduce_forces() ships each rank's
entries for remote masters to the owner, then recomputes every master's
total as a keyed segmented sum over the merged entry list.  Because the
merged list for a particle is identical no matter how the pair work was
scattered over ranks, the reduced totals are bitwise identical across
rank counts and protocols.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicateId, InvariantViolation, UnknownId, WrongDomain
from .partition import owner_indices
from .transport import Msg, MsgKind, Transport

ROLE_MASTER = 0
ROLE_SHADOW = 1

_GROW = 64


def make_particle_id(creation_rank: int, counter: int) -> int:
    """Globally unique 64-bit id: creation rank in the high half."""
    return (creation_rank << 32) | counter


@dataclass
class Particle:
    """Plain value object used to feed particles into a store."""

    pid: int
    pos: np.ndarray
    vel: np.ndarray
    radius: float
    inv_mass: float
    angvel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))


class ParticleStore:
    def __init__(self, rank: int, capacity: int = _GROW):
        self.rank = rank
        n = max(capacity, 1)
        self.pos = np.zeros((n, 3))
        self.vel = np.zeros((n, 3))
        self.angvel = np.zeros((n, 3))
        self.quat = np.zeros((n, 4))
        self.radius = np.zeros(n)
        self.inv_mass = np.zeros(n)
        self.force = np.zeros((n, 3))
        self.torque = np.zeros((n, 3))
        self.ids = np.zeros(n, dtype=np.int64)
        self.role = np.zeros(n, dtype=np.int8)
        self.owner = np.zeros(n, dtype=np.int32)
        self.count = 0
        self.index: dict[int, int] = {}
        self.registry: dict[int, set[int]] = {}
        self.requesters: dict[int, set[int]] = {}
        # force entry buffers (lists of arrays), flushed by reduce_forces()
        self._e_target: list[np.ndarray] = []
        self._e_key: list[np.ndarray] = []
        self._e_force: list[np.ndarray] = []
        self._e_torque: list[np.ndarray] = []

    # -- capacity management -------------------------------------------------

    def _grow(self) -> None:
        n = self.pos.shape[0] * 2
        for name in ("pos", "vel", "angvel", "quat", "force", "torque"):
            old = getattr(self, name)
            new = np.zeros((n, old.shape[1]), dtype=old.dtype)
            new[: self.count] = old[: self.count]
            setattr(self, name, new)
        for name in ("radius", "inv_mass", "ids", "role", "owner"):
            old = getattr(self, name)
            new = np.zeros(n, dtype=old.dtype)
            new[: self.count] = old[: self.count]
            setattr(self, name, new)

    def _alloc_row(self, pid: int) -> int:
        if pid in self.index:
            raise DuplicateId(f"particle {pid} already present on rank {self.rank}")
        if self.count == self.pos.shape[0]:
            self._grow()
        row = self.count
        self.count += 1
        self.index[pid] = row
        return row

    # -- row views -----------------------------------------------------------

    def row_of(self, pid: int) -> int:
        try:
            return self.index[pid]
        except KeyError:
            raise UnknownId(f"particle {pid} not on rank {self.rank}") from None

    def is_master(self, pid: int) -> bool:
        return self.role[self.row_of(pid)] == ROLE_MASTER

    def master_rows(self) -> np.ndarray:
        return np.flatnonzero(self.role[: self.count] == ROLE_MASTER)

    def shadow_rows(self) -> np.ndarray:
        return np.flatnonzero(self.role[: self.count] == ROLE_SHADOW)

    def master_ids(self) -> list[int]:
        return sorted(int(self.ids[r]) for r in self.master_rows())

    def shadow_ids(self) -> list[int]:
        return sorted(int(self.ids[r]) for r in self.shadow_rows())

    def pack_state(self, pid: int) -> np.ndarray:
        """Full 15-double wire state of one particle."""
        r = self.row_of(pid)
        return np.concatenate(
            [
                self.pos[r],
                self.vel[r],
                self.angvel[r],
                self.quat[r],
                [self.radius[r], self.inv_mass[r]],
            ]
        )

    def _fill_row(self, row: int, state: np.ndarray) -> None:
        self.pos[row] = state[0:3]
        self.vel[row] = state[3:6]
        self.angvel[row] = state[6:9]
        self.quat[row] = state[9:13]
        if len(state) >= 15:
            self.radius[row] = state[13]
            self.inv_mass[row] = state[14]
        self.force[row] = 0.0
        self.torque[row] = 0.0

    # -- mutation ------------------------------------------------------------

    def insert_master(self, p: Particle, partition=None) -> None:
        """Add an authoritative particle.  When a partition is given the
        particle's position must fall inside this rank's subdomain."""
        if partition is not None:
            if int(owner_indices(partition, p.pos.reshape(1, 3))[0]) != self.rank:
                raise WrongDomain(
                    f"particle {p.pid} at {p.pos} is outside the subdomain of rank {self.rank}"
                )
        row = self._alloc_row(p.pid)
        self.pos[row] = p.pos
        self.vel[row] = p.vel
        self.angvel[row] = p.angvel
        self.quat[row] = p.quat
        self.radius[row] = p.radius
        self.inv_mass[row] = p.inv_mass
        self.force[row] = 0.0
        self.torque[row] = 0.0
        self.ids[row] = p.pid
        self.role[row] = ROLE_MASTER
        self.owner[row] = self.rank
        self.registry[p.pid] = set()

    def apply_create_shadow(self, pid: int, state: np.ndarray, owner: int, src: int) -> bool:
        """Materialize a shadow copy.  Duplicate creations are discarded (the
        requesting rank is still recorded); a creation aimed at a particle
        this rank masters is a protocol error."""
        if pid in self.index:
            if self.role[self.index[pid]] == ROLE_MASTER:
                raise InvariantViolation(
                    f"rank {self.rank} asked to shadow particle {pid} it masters"
                )
            self.requesters.setdefault(pid, set()).add(src)
            return False
        row = self._alloc_row(pid)
        self._fill_row(row, state)
        self.ids[row] = pid
        self.role[row] = ROLE_SHADOW
        self.owner[row] = owner
        self.requesters.setdefault(pid, set()).add(src)
        return True

    def apply_update(self, pid: int, state: np.ndarray) -> None:
        row = self.row_of(pid)
        if self.role[row] != ROLE_SHADOW:
            raise InvariantViolation(
                f"rank {self.rank} received a shadow update for master {pid}"
            )
        self._fill_row(row, state)

    def promote_shadow(self, pid: int, shadow_ranks) -> None:
        """Shadow becomes the authoritative copy (ownership arrived here)."""
        row = self.row_of(pid)
        if self.role[row] != ROLE_SHADOW:
            raise InvariantViolation(f"cannot promote {pid}: not a shadow on rank {self.rank}")
        self.role[row] = ROLE_MASTER
        self.owner[row] = self.rank
        self.registry[pid] = set(shadow_ranks)
        # requesters are kept: if ownership later moves away again and this
        # copy self-deletes, the old requesters still need the notification
        # that clears their resend suppression

    def demote_master(self, pid: int, new_owner: int) -> None:
        row = self.row_of(pid)
        if self.role[row] != ROLE_MASTER:
            raise InvariantViolation(f"cannot demote {pid}: not a master on rank {self.rank}")
        self.role[row] = ROLE_SHADOW
        self.owner[row] = new_owner
        self.registry.pop(pid, None)

    def set_owner(self, pid: int, owner: int) -> None:
        row = self.row_of(pid)
        if self.role[row] != ROLE_SHADOW:
            raise InvariantViolation(
                f"owner change for {pid} on rank {self.rank} which masters it"
            )
        self.owner[row] = owner

    def remove(self, pid: int) -> None:
        row = self.row_of(pid)
        last = self.count - 1
        if row != last:
            moved = int(self.ids[last])
            for name in ("pos", "vel", "angvel", "quat", "force", "torque"):
                getattr(self, name)[row] = getattr(self, name)[last]
            for name in ("radius", "inv_mass", "ids", "role", "owner"):
                getattr(self, name)[row] = getattr(self, name)[last]
            self.index[moved] = row
        del self.index[pid]
        self.count = last
        self.registry.pop(pid, None)
        self.requesters.pop(pid, None)

    # -- force accumulation --------------------------------------------------

    def rows_for(self, pids: np.ndarray) -> np.ndarray:
        """Vectorized id-to-row lookup; raises UnknownId on any miss."""
        pids = np.asarray(pids, dtype=np.int64)
        if len(pids) == 0:
            return np.zeros(0, dtype=np.int64)
        if self.count == 0:
            raise UnknownId(f"particle {int(pids[0])} not on rank {self.rank}")
        ids = self.ids[: self.count]
        order = np.argsort(ids, kind="stable")
        sorted_ids = ids[order]
        at = np.searchsorted(sorted_ids, pids)
        bad = (at >= self.count) | (sorted_ids[np.minimum(at, self.count - 1)] != pids)
        if bad.any():
            missing = int(np.asarray(pids)[bad][0])
            raise UnknownId(f"particle {missing} not on rank {self.rank}")
        return order[at]

    def add_force_entries(
        self,
        targets: np.ndarray,
        keys: np.ndarray,
        forces: np.ndarray,
        torques: np.ndarray,
    ) -> None:
        """Record a batch of per-contact contributions.

        Each entry names a target particle, the interaction partner it came
        from (partner particle id, or a negative wall code), and the force
        and torque.  The key orders the final summation; contributions to the
        same particle never share a key within a step.  The plain accumulator
        columns are incremented right away for inspection; the authoritative
        totals are rebuilt from the entries by reduce_forces().
        """
        targets = np.asarray(targets, dtype=np.int64)
        if len(targets) == 0:
            return
        rows = self.rows_for(targets)
        forces = np.asarray(forces, dtype=np.float64).reshape(-1, 3)
        torques = np.asarray(torques, dtype=np.float64).reshape(-1, 3)
        np.add.at(self.force, rows, forces)
        np.add.at(self.torque, rows, torques)
        self._e_target.append(targets)
        self._e_key.append(np.asarray(keys, dtype=np.int64))
        self._e_force.append(forces)
        self._e_torque.append(torques)

    def add_force_contribution(
        self, pid: int, force: np.ndarray, torque: np.ndarray, key: int = 0
    ) -> None:
        """Scalar convenience wrapper around add_force_entries()."""
        self.add_force_entries(
            np.array([pid], dtype=np.int64),
            np.array([key], dtype=np.int64),
            np.asarray(force, dtype=np.float64).reshape(1, 3),
            np.asarray(torque, dtype=np.float64).reshape(1, 3),
        )

    def take_entries(self):
        if self._e_target:
            t = np.concatenate(self._e_target)
            k = np.concatenate(self._e_key)
            f = np.concatenate(self._e_force)
            q = np.concatenate(self._e_torque)
        else:
            t = np.zeros(0, dtype=np.int64)
            k = np.zeros(0, dtype=np.int64)
            f = np.zeros((0, 3))
            q = np.zeros((0, 3))
        self._e_target.clear()
        self._e_key.clear()
        self._e_force.clear()
        self._e_torque.clear()
        return t, k, f, q

    def snapshot_rows(self) -> list[str]:
        """Readable, repr-exact rows for every particle on this rank."""
        rows = []
        for pid in sorted(self.index):
            r = self.index[pid]
            role = "master" if self.role[r] == ROLE_MASTER else "shadow"
            pos = ",".join(repr(float(v)) for v in self.pos[r])
            vel = ",".join(repr(float(v)) for v in self.vel[r])
            rows.append(
                f"{pid} {role} {int(self.owner[r])} {pos} {vel} {repr(float(self.radius[r]))}"
            )
        return rows


def reduce_forces(stores: list[ParticleStore], transport: Transport, runner) -> None:
    """Combine force entries so every master holds the exact global total.

    One exchange: each rank ships the entries it accumulated for particles
    it does not own to the owner, then every master sorts its merged entry
    list by partner key and folds it with a segmented sum.  Identical entry
    multisets give bitwise identical totals, independent of how the pair
    work was distributed.
    """
    n = transport.n_ranks
    kept: list[tuple] = [None] * n

    def ship(rank: int) -> None:
        st = stores[rank]
        t, k, f, q = st.take_entries()
        if len(t):
            owners = st.owner[st.rows_for(t)].astype(np.int64)
        else:
            owners = np.zeros(0, dtype=np.int64)
        local = owners == rank
        kept[rank] = (t[local], k[local], f[local], q[local])
        for dst in np.unique(owners[~local]):
            sel = owners == dst
            transport.enqueue(
                rank,
                int(dst),
                Msg(
                    MsgKind.FORCE_CONTRIBUTION,
                    pid=0,
                    keys=np.stack([t[sel], k[sel]], axis=1).ravel(),
                    forces=f[sel],
                    torques=q[sel],
                ),
            )

    runner.map(ship, n)
    transport.exchange()

    def fold(rank: int) -> None:
        st = stores[rank]
        t, k, f, q = kept[rank]
        parts_t, parts_k, parts_f, parts_q = [t], [k], [f], [q]
        for _, m in transport.take_inbox(rank):
            pairs = np.asarray(m.keys, dtype=np.int64).reshape(-1, 2)
            parts_t.append(pairs[:, 0])
            parts_k.append(pairs[:, 1])
            parts_f.append(m.forces)
            parts_q.append(m.torques)
        t = np.concatenate(parts_t)
        k = np.concatenate(parts_k)
        f = np.concatenate(parts_f)
        q = np.concatenate(parts_q)
        masters = st.master_rows()
        st.force[masters] = 0.0
        st.torque[masters] = 0.0
        shadows = st.shadow_rows()
        st.force[shadows] = 0.0
        st.torque[shadows] = 0.0
        if len(t) == 0:
            return
        order = np.lexsort((k, t))
        t, f, q = t[order], f[order], q[order]
        starts = np.flatnonzero(np.r_[True, t[1:] != t[:-1]])
        sums_f = np.add.reduceat(f, starts, axis=0)
        sums_q = np.add.reduceat(q, starts, axis=0)
        rows = st.rows_for(t[starts])
        st.force[rows] = sums_f
        st.torque[rows] = sums_q

    runner.map(fold, n)
