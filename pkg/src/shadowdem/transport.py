"""Deterministic superstep message passing between in-process ranks.

Every rank owns an outbox per destination; `exchange()` moves all buffered
messages at once and empties the buffers.  Delivery order is fixed: each
inbox is sorted by source rank ascending, FIFO within a source.  Messages
addressed to the same destination travel as one aggregated block, and the
per-exchange counters (messages, nonempty blocks, payload bytes) reflect
that aggregation.

Wire format, used for the byte counters and the optional binary dump:

    block   := u32 message count | message*
    message := u8 tag | i64 particle id | payload

Payload fields are little-endian 64-bit values in the order documented on
each kind below.  Full particle state is a fixed 15-double vector
[position*3, velocity*3, angular velocity*3, orientation quaternion*4,
radius, inverse mass]; the 13-double prefix (everything except radius and
inverse mass) is the update payload, so an update is a strict subset of a
create.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import InvalidRank

STATE_LEN = 15   # full state doubles
UPDATE_LEN = 13  # position/velocity/angular velocity/orientation prefix


class MsgKind(IntEnum):
    CREATE_SHADOW = 1        # payload: state*15, owner rank
    UPDATE_SHADOW = 2        # payload: state prefix*13
    REMOVE_SHADOW = 3        # payload: none
    TRANSFER_OWNERSHIP = 4   # payload: state*15, u32 count, shadow-owner ranks
    OWNER_CHANGED = 5        # payload: new owner rank
    FORCE_CONTRIBUTION = 6   # payload: u32 count, (key, force*3, torque*3)*
    SHADOW_DELETED = 7       # payload: none (deleting rank is the source)
    REGISTER_SHADOW_OWNER = 8  # payload: newly created shadow's rank


@dataclass(slots=True)
class Msg:
    kind: MsgKind
    pid: int
    state: np.ndarray | None = None
    owner: int = -1
    ranks: tuple[int, ...] = ()
    keys: np.ndarray | None = None
    forces: np.ndarray | None = None
    torques: np.ndarray | None = None


def message_size(m: Msg) -> int:
    """Encoded size in bytes; kept in sync with encode_message by tests."""
    n = 9  # tag + id
    if m.kind in (MsgKind.CREATE_SHADOW,):
        n += STATE_LEN * 8 + 8
    elif m.kind is MsgKind.UPDATE_SHADOW:
        n += UPDATE_LEN * 8
    elif m.kind is MsgKind.TRANSFER_OWNERSHIP:
        n += STATE_LEN * 8 + 4 + 8 * len(m.ranks)
    elif m.kind in (MsgKind.OWNER_CHANGED, MsgKind.REGISTER_SHADOW_OWNER):
        n += 8
    elif m.kind is MsgKind.FORCE_CONTRIBUTION:
        n += 4 + 56 * len(m.keys)
    return n


def encode_message(m: Msg) -> bytes:
    out = [struct.pack("<Bq", int(m.kind), m.pid)]
    if m.kind is MsgKind.CREATE_SHADOW:
        out.append(np.asarray(m.state, dtype="<f8").tobytes())
        out.append(struct.pack("<q", m.owner))
    elif m.kind is MsgKind.UPDATE_SHADOW:
        out.append(np.asarray(m.state[:UPDATE_LEN], dtype="<f8").tobytes())
    elif m.kind is MsgKind.TRANSFER_OWNERSHIP:
        out.append(np.asarray(m.state, dtype="<f8").tobytes())
        out.append(struct.pack("<I", len(m.ranks)))
        out.append(struct.pack(f"<{len(m.ranks)}q", *m.ranks) if m.ranks else b"")
    elif m.kind in (MsgKind.OWNER_CHANGED, MsgKind.REGISTER_SHADOW_OWNER):
        out.append(struct.pack("<q", m.owner))
    elif m.kind is MsgKind.FORCE_CONTRIBUTION:
        out.append(struct.pack("<I", len(m.keys)))
        for key, f, t in zip(m.keys, m.forces, m.torques):
            out.append(struct.pack("<q", int(key)))
            out.append(np.asarray(f, dtype="<f8").tobytes())
            out.append(np.asarray(t, dtype="<f8").tobytes())
    return b"".join(out)


def decode_message(buf: bytes, offset: int = 0) -> tuple[Msg, int]:
    tag, pid = struct.unpack_from("<Bq", buf, offset)
    offset += 9
    kind = MsgKind(tag)
    m = Msg(kind, pid)
    if kind is MsgKind.CREATE_SHADOW:
        m.state = np.frombuffer(buf, "<f8", STATE_LEN, offset).copy()
        offset += STATE_LEN * 8
        (m.owner,) = struct.unpack_from("<q", buf, offset)
        offset += 8
    elif kind is MsgKind.UPDATE_SHADOW:
        m.state = np.frombuffer(buf, "<f8", UPDATE_LEN, offset).copy()
        offset += UPDATE_LEN * 8
    elif kind is MsgKind.TRANSFER_OWNERSHIP:
        m.state = np.frombuffer(buf, "<f8", STATE_LEN, offset).copy()
        offset += STATE_LEN * 8
        (count,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        m.ranks = struct.unpack_from(f"<{count}q", buf, offset)
        offset += 8 * count
    elif kind in (MsgKind.OWNER_CHANGED, MsgKind.REGISTER_SHADOW_OWNER):
        (m.owner,) = struct.unpack_from("<q", buf, offset)
        offset += 8
    elif kind is MsgKind.FORCE_CONTRIBUTION:
        (count,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        keys, forces, torques = [], [], []
        for _ in range(count):
            (key,) = struct.unpack_from("<q", buf, offset)
            keys.append(key)
            forces.append(np.frombuffer(buf, "<f8", 3, offset + 8).copy())
            torques.append(np.frombuffer(buf, "<f8", 3, offset + 32).copy())
            offset += 56
        m.keys = np.array(keys, dtype=np.int64)
        m.forces = np.array(forces, dtype=np.float64).reshape(count, 3)
        m.torques = np.array(torques, dtype=np.float64).reshape(count, 3)
    return m, offset


@dataclass
class ExchangeRecord:
    messages: int
    blocks: int
    bytes: int


class Transport:
    """All mailboxes for one world.

    enqueue() may be called concurrently for distinct source ranks; exchange()
    must only run while no rank phase is in flight (the runners guarantee
    this), which is the barrier of the superstep model.
    """

    def __init__(self, n_ranks: int):
        self.n_ranks = n_ranks
        self._out: list[dict[int, list[Msg]]] = [dict() for _ in range(n_ranks)]
        self._in: list[list[tuple[int, Msg]]] = [[] for _ in range(n_ranks)]
        self.exchanges = 0
        self.messages_total = 0
        self.blocks_total = 0
        self.bytes_total = 0
        self.sent_by_kind = {k: 0 for k in MsgKind}
        self.records: list[ExchangeRecord] = []

    def enqueue(self, src: int, dst: int, msg: Msg) -> None:
        # called concurrently for distinct src; touches only src-local state
        if not 0 <= dst < self.n_ranks:
            raise InvalidRank(f"destination rank {dst} not in [0, {self.n_ranks})")
        if not 0 <= src < self.n_ranks:
            raise InvalidRank(f"source rank {src} not in [0, {self.n_ranks})")
        self._out[src].setdefault(dst, []).append(msg)

    def exchange(self) -> ExchangeRecord:
        msgs = blocks = nbytes = 0
        # source-ascending outer loop makes every inbox arrive sorted by source
        for src in range(self.n_ranks):
            outbox = self._out[src]
            for dst in sorted(outbox):
                block = outbox[dst]
                blocks += 1
                msgs += len(block)
                nbytes += 4 + sum(message_size(m) for m in block)
                inbox = self._in[dst]
                for m in block:
                    self.sent_by_kind[m.kind] += 1
                    inbox.append((src, m))
            outbox.clear()
        self.exchanges += 1
        self.messages_total += msgs
        self.blocks_total += blocks
        self.bytes_total += nbytes
        rec = ExchangeRecord(msgs, blocks, nbytes)
        self.records.append(rec)
        return rec

    def take_inbox(self, rank: int) -> list[tuple[int, Msg]]:
        if not 0 <= rank < self.n_ranks:
            raise InvalidRank(f"rank {rank} not in [0, {self.n_ranks})")
        inbox = self._in[rank]
        self._in[rank] = []
        return inbox

    def pending_outbound(self) -> int:
        return sum(len(b) for out in self._out for b in out.values())


class SequentialRunner:
    """Round-robin execution of per-rank phases on the calling thread."""

    def map(self, fn, n_ranks: int) -> None:
        for rank in range(n_ranks):
            fn(rank)

    def close(self) -> None:
        pass


class ThreadedRunner:
    """One worker per rank; a phase completes on every rank before the next
    phase (or an exchange) starts, so observable behavior matches the
    sequential runner exactly."""

    def __init__(self, n_ranks: int):
        self._pool = ThreadPoolExecutor(max_workers=max(1, n_ranks))

    def map(self, fn, n_ranks: int) -> None:
        # list() both joins the phase barrier and re-raises worker errors
        list(self._pool.map(fn, range(n_ranks)))

    def close(self) -> None:
        self._pool.shutdown(wait=True)
