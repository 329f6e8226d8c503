"""Shadow particle synchronization protocols.

A particle has one authoritative master copy on the rank owning its center
and read-only shadow copies on every rank whose subdomain its sphere
overlaps.  Two interchangeable protocols keep the copies consistent; both
leave every copy bitwise equal to its master at collision detection time,
so switching protocols never changes a trajectory.

Next-neighbor sync (``sync_next_neighbor``), one exchange per step.  Each
master scans the 26 neighboring subdomains, creating, updating, or
withdrawing shadows so the registry matches the overlap set exactly, then
hands ownership over when its center crossed into a neighbor.  Valid only
while every radius stays below the smallest subdomain edge, because a
shadow can never sit farther than one hop from its master.

Shadow-owner sync (``sync_shadow_owners``), two exchanges per step.  The
owner only pushes state to the ranks in its registry; creation is
decentralized: every copy, shadow or master, offers the particle to any
neighboring subdomain the sphere overlaps, so shadows diffuse outward one
subdomain layer per call and particles may span arbitrarily many ranks.
A copy suppresses repeat offers to a destination (and the owner skips
registered ranks); shadows that stopped touching their own subdomain
delete themselves and notify both the owner and every rank whose
suppression record mentions them.  Duplicate creations arriving from two
copies in the same round are discarded by id.

``required_startup_syncs`` gives the number of sync rounds that guarantee
full shadow coverage from a cold start, after which one round per step
maintains it.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvariantViolation
from .partition import owner_indices
from .geometry import sphere_overlaps_aabb
from .store import ROLE_MASTER, ROLE_SHADOW
from .transport import Msg, MsgKind


def required_startup_syncs(radius: float, min_edge: float) -> int:
    """Sync rounds needed before the first step so every subdomain a sphere
    of this radius can overlap holds a shadow.  Shadows spread one subdomain
    layer per round, starting from the owner's direct neighbors."""
    if radius <= 0 or min_edge <= 0:
        raise ValueError("radius and subdomain edge must be positive")
    return math.ceil(radius / min_edge) + 1


def _cache_has(cache: dict, pid: int, dst: int) -> bool:
    s = cache.get(pid)
    return s is not None and dst in s


def _cache_add(cache: dict, pid: int, dst: int) -> None:
    cache.setdefault(pid, set()).add(dst)


def _cache_discard(cache: dict, pid: int, src: int) -> None:
    s = cache.get(pid)
    if s is not None:
        s.discard(src)
        if not s:
            del cache[pid]


def _neighbor_boxes(world, rank: int):
    """Foreign neighbor ranks of `rank` (sorted) with their subdomains."""
    dsts = [d for d in world.part.neighbors[rank] if d != rank]
    return dsts, [world.part.box(d) for d in dsts]


def _interior_mask(store, rows: np.ndarray, box) -> np.ndarray:
    """True where the sphere lies strictly inside this rank's own subdomain,
    hence cannot overlap any other subdomain."""
    pos = store.pos[rows]
    r = store.radius[rows]
    lo_margin = np.min(pos - box.lo, axis=1)
    hi_margin = np.min(box.hi - pos, axis=1)
    return (lo_margin > r) & (hi_margin > r)


def _apply_inbox(world, rank: int) -> None:
    """Dispatch one rank's freshly exchanged sync messages."""
    st = world.stores[rank]
    cache = world.caches[rank]
    trace = world.trace
    for src, m in world.transport.take_inbox(rank):
        kind = m.kind
        if kind is MsgKind.CREATE_SHADOW:
            st.apply_create_shadow(m.pid, m.state, int(m.owner), src)
        elif kind is MsgKind.UPDATE_SHADOW:
            st.apply_update(m.pid, m.state)
        elif kind is MsgKind.REMOVE_SHADOW:
            st.remove(m.pid)
            cache.pop(m.pid, None)
            if trace is not None:
                trace.append(("dead", rank, m.pid))
        elif kind is MsgKind.TRANSFER_OWNERSHIP:
            st.apply_update(m.pid, m.state)
            st.promote_shadow(m.pid, m.ranks)
        elif kind is MsgKind.OWNER_CHANGED:
            st.set_owner(m.pid, int(m.owner))
        elif kind is MsgKind.SHADOW_DELETED:
            if m.pid in st.registry:
                st.registry[m.pid].discard(src)
            _cache_discard(cache, m.pid, src)
        elif kind is MsgKind.REGISTER_SHADOW_OWNER:
            if m.pid not in st.registry:
                raise InvariantViolation(
                    f"rank {rank} got a shadow registration for {m.pid} it does not own"
                )
            st.registry[m.pid].add(int(m.owner))
        else:
            raise InvariantViolation(f"unexpected {kind.name} during sync")


# -- next-neighbor protocol ---------------------------------------------------


def _nns_scan(world, rank: int) -> None:
    st = world.stores[rank]
    part = world.part
    tp = world.transport
    trace = world.trace
    rows = st.master_rows()
    if len(rows) == 0:
        return
    order = np.argsort(st.ids[rows], kind="stable")
    rows = rows[order]
    interior = _interior_mask(st, rows, part.box(rank))
    new_owner = owner_indices(part, st.pos[rows])
    dsts, boxes = _neighbor_boxes(world, rank)

    # boundary-layer candidates: everything else provably has no messages
    cand = [
        i
        for i in range(len(rows))
        if not interior[i] or st.registry[int(st.ids[rows[i]])]
    ]
    if not cand:
        return
    crows = rows[cand]
    overlap = np.zeros((len(cand), len(dsts)), dtype=bool)
    for j, box in enumerate(boxes):
        overlap[:, j] = sphere_overlaps_aabb(
            st.pos[crows], st.radius[crows], box, part.domain
        )

    pids = [int(st.ids[r]) for r in crows]
    doomed = []
    for k, pid in enumerate(pids):
        reg = st.registry[pid]

        # shadow maintenance first, so the registry equals the exact overlap
        # set before any ownership decision is made from it
        state = None
        for j, dst in enumerate(dsts):
            if overlap[k, j]:
                if state is None:
                    state = st.pack_state(pid)
                if dst in reg:
                    tp.enqueue(rank, dst, Msg(MsgKind.UPDATE_SHADOW, pid, state=state))
                else:
                    tp.enqueue(
                        rank, dst, Msg(MsgKind.CREATE_SHADOW, pid, state=state, owner=rank)
                    )
                    reg.add(dst)
                    if trace is not None:
                        trace.append(("create", rank, dst, pid))
            elif dst in reg:
                tp.enqueue(rank, dst, Msg(MsgKind.REMOVE_SHADOW, pid))
                reg.discard(dst)

        dest = int(new_owner[cand[k]])
        if dest < 0:
            # left the domain through an open face: the particle ends here
            for dst in sorted(reg):
                tp.enqueue(rank, dst, Msg(MsgKind.REMOVE_SHADOW, pid))
            doomed.append(pid)
            continue
        if dest != rank:
            # center crossed into a neighbor: hand the master over, keep a shadow
            ranks = tuple(sorted((reg | {rank}) - {dest}))
            if state is None:
                state = st.pack_state(pid)
            tp.enqueue(
                rank, dest, Msg(MsgKind.TRANSFER_OWNERSHIP, pid, state=state, ranks=ranks)
            )
            for dst in sorted(reg - {dest}):
                tp.enqueue(rank, dst, Msg(MsgKind.OWNER_CHANGED, pid, owner=dest))
            st.demote_master(pid, dest)
    for pid in doomed:
        st.remove(pid)


def sync_next_neighbor(world) -> None:
    """One exchange: masters refresh, create, and withdraw neighbor shadows,
    then transfer ownership across crossed boundaries."""
    n = world.part.n_ranks
    world.runner.map(lambda r: _nns_scan(world, r), n)
    world.transport.exchange()
    world.runner.map(lambda r: _apply_inbox(world, r), n)


# -- shadow-owner protocol ----------------------------------------------------


def _sos_push(world, rank: int) -> None:
    st = world.stores[rank]
    part = world.part
    tp = world.transport
    rows = st.master_rows()
    if len(rows) == 0:
        return
    order = np.argsort(st.ids[rows], kind="stable")
    rows = rows[order]
    new_owner = owner_indices(part, st.pos[rows])

    pids = [int(st.ids[r]) for r in rows]
    doomed = []
    for k, pid in enumerate(pids):
        reg = st.registry[pid]
        dest = int(new_owner[k])
        if dest < 0:
            for dst in sorted(reg):
                tp.enqueue(rank, dst, Msg(MsgKind.REMOVE_SHADOW, pid))
            doomed.append(pid)
            continue
        if not reg and dest == rank:
            continue
        state = st.pack_state(pid)
        for dst in sorted(reg):
            tp.enqueue(rank, dst, Msg(MsgKind.UPDATE_SHADOW, pid, state=state))
        if dest != rank:
            ranks = tuple(sorted((reg | {rank}) - {dest}))
            tp.enqueue(
                rank, dest, Msg(MsgKind.TRANSFER_OWNERSHIP, pid, state=state, ranks=ranks)
            )
            for dst in sorted(reg - {dest}):
                tp.enqueue(rank, dst, Msg(MsgKind.OWNER_CHANGED, pid, owner=dest))
            st.demote_master(pid, dest)
    for pid in doomed:
        st.remove(pid)


def _sos_diffuse(world, rank: int) -> None:
    st = world.stores[rank]
    part = world.part
    tp = world.transport
    cache = world.caches[rank]
    trace = world.trace
    own_box = part.box(rank)
    dsts, boxes = _neighbor_boxes(world, rank)

    n = st.count
    if n == 0:
        return
    all_rows = np.arange(n)
    order = np.argsort(st.ids[:n], kind="stable")
    all_rows = all_rows[order]
    roles = st.role[all_rows]
    interior = _interior_mask(st, all_rows, own_box)
    # interior masters can neither offer the particle anywhere nor die
    keep = (roles == ROLE_SHADOW) | ~interior
    crows = all_rows[keep]
    if len(crows) == 0:
        return
    overlap = np.zeros((len(crows), len(dsts)), dtype=bool)
    for j, box in enumerate(boxes):
        overlap[:, j] = sphere_overlaps_aabb(
            st.pos[crows], st.radius[crows], box, part.domain
        )
    touches_home = sphere_overlaps_aabb(
        st.pos[crows], st.radius[crows], own_box, part.domain
    )

    pids = [int(st.ids[r]) for r in crows]
    masters = st.role[crows] == ROLE_MASTER
    owners = [
        rank if masters[k] else int(st.owner[crows[k]]) for k in range(len(crows))
    ]
    doomed = []
    for k, pid in enumerate(pids):
        is_master = bool(masters[k])
        owner = owners[k]
        reg = st.registry.get(pid)
        state = None
        for j, dst in enumerate(dsts):
            if not overlap[k, j] or dst == owner:
                continue
            if _cache_has(cache, pid, dst):
                continue
            if is_master and dst in reg:
                continue
            if state is None:
                state = st.pack_state(pid)
            tp.enqueue(rank, dst, Msg(MsgKind.CREATE_SHADOW, pid, state=state, owner=owner))
            _cache_add(cache, pid, dst)
            if trace is not None:
                trace.append(("create", rank, dst, pid))
            if is_master:
                reg.add(dst)
            else:
                tp.enqueue(
                    rank, owner, Msg(MsgKind.REGISTER_SHADOW_OWNER, pid, owner=dst)
                )
        if not is_master and not touches_home[k]:
            # this shadow no longer belongs here; everyone tracking it must hear
            requesters = st.requesters.get(pid, set())
            tp.enqueue(rank, owner, Msg(MsgKind.SHADOW_DELETED, pid))
            for req in sorted(requesters - {owner, rank}):
                tp.enqueue(rank, req, Msg(MsgKind.SHADOW_DELETED, pid))
            doomed.append(pid)
            if trace is not None:
                trace.append(("dead", rank, pid))
    for pid in doomed:
        st.remove(pid)


def sync_shadow_owners(world) -> None:
    """Two exchanges: owners push fresh state to registered shadows, then
    every copy offers the particle to overlapped neighbor subdomains and
    detached shadows retire themselves."""
    n = world.part.n_ranks
    world.runner.map(lambda r: _sos_push(world, r), n)
    world.transport.exchange()
    world.runner.map(lambda r: _apply_inbox(world, r), n)
    world.runner.map(lambda r: _sos_diffuse(world, r), n)
    world.transport.exchange()
    world.runner.map(lambda r: _apply_inbox(world, r), n)
