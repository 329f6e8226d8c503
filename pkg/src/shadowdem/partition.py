"""Uniform grid decomposition of the domain into one cuboid subdomain per rank.

Rank ids follow x-fastest order: rank = i + nx*(j + ny*k).  Neighbor tables
cover the full 26-cell Moore stencil with periodic wrapping; a rank may list
itself as a neighbor only when a periodic axis has grid dimension one, in
which case the self-entry corresponds to a nonzero wrap.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import OutOfDomain, ZeroDimension
from .geometry import Aabb, DomainBox, wrap_position


@dataclass(frozen=True)
class Partition:
    domain: DomainBox
    grid: tuple[int, int, int]
    edges: np.ndarray  # subdomain extent per axis, (3,)
    n_ranks: int
    neighbors: tuple[tuple[int, ...], ...]  # sorted, distinct, per rank

    @property
    def min_edge(self) -> float:
        return float(self.edges.min())

    def index_of(self, rank: int) -> tuple[int, int, int]:
        nx, ny, _ = self.grid
        return (rank % nx, (rank // nx) % ny, rank // (nx * ny))

    def rank_of(self, i: int, j: int, k: int) -> int:
        nx, ny, _ = self.grid
        return i + nx * (j + ny * k)

    def box(self, rank: int) -> Aabb:
        idx = np.array(self.index_of(rank), dtype=np.float64)
        lo = self.domain.lo + idx * self.edges
        hi = self.domain.lo + (idx + 1.0) * self.edges
        # snap the outermost faces onto the domain so the union covers it exactly
        top = np.array(self.index_of(rank)) == np.array(self.grid) - 1
        hi = np.where(top, self.domain.hi, hi)
        return Aabb(lo, hi)

    def hops(self, a: int, b: int) -> int:
        """Moore-adjacency graph distance between two ranks (wrap aware)."""
        ia, ib = np.array(self.index_of(a)), np.array(self.index_of(b))
        n = np.array(self.grid)
        d = np.abs(ia - ib)
        wrap = np.array(self.domain.periodic)
        d = np.where(wrap, np.minimum(d, n - d), d)
        return int(d.max())


def build_partition(domain: DomainBox, grid) -> Partition:
    grid = tuple(int(g) for g in grid)
    if any(g <= 0 for g in grid):
        raise ZeroDimension(f"grid dimensions must be positive, got {grid}")
    edges = domain.extent / np.array(grid, dtype=np.float64)
    n_ranks = grid[0] * grid[1] * grid[2]
    neighbors = tuple(_enumerate_neighbors(domain, grid, r) for r in range(n_ranks))
    return Partition(domain, grid, edges, n_ranks, neighbors)


def _enumerate_neighbors(domain: DomainBox, grid, rank: int) -> tuple[int, ...]:
    nx, ny, nz = grid
    i, j, k = rank % nx, (rank // nx) % ny, rank // (nx * ny)
    found = set()
    for di, dj, dk in product((-1, 0, 1), repeat=3):
        if di == dj == dk == 0:
            continue
        coords = []
        wrapped = False
        for axis, (base, off, n) in enumerate(zip((i, j, k), (di, dj, dk), grid)):
            c = base + off
            if 0 <= c < n:
                coords.append(c)
            elif domain.periodic[axis]:
                coords.append(c % n)
                wrapped = True
            else:
                break
        else:
            nb = coords[0] + nx * (coords[1] + ny * coords[2])
            if nb != rank or wrapped:
                found.add(nb)
    return tuple(sorted(found))


def owner_indices(part: Partition, pos) -> np.ndarray:
    """Vectorized owner lookup.  pos is (n, 3); returns (n,) rank ids with -1
    for points outside the domain on a non-periodic axis."""
    p = wrap_position(np.atleast_2d(np.asarray(pos, dtype=np.float64)), part.domain)
    grid = np.array(part.grid)
    rel = (p - part.domain.lo) / part.edges
    idx = np.floor(rel).astype(np.int64)
    outside = np.zeros(len(p), dtype=bool)
    for a in range(3):
        if not part.domain.periodic[a]:
            outside |= (p[:, a] < part.domain.lo[a]) | (p[:, a] >= part.domain.hi[a])
    np.clip(idx, 0, grid - 1, out=idx)
    ranks = idx[:, 0] + part.grid[0] * (idx[:, 1] + part.grid[1] * idx[:, 2])
    ranks[outside] = -1
    return ranks


def owner_of(part: Partition, pos) -> int:
    """Rank owning a point.  Raises OutOfDomain beyond a non-periodic face."""
    r = int(owner_indices(part, np.asarray(pos, dtype=np.float64).reshape(1, 3))[0])
    if r < 0:
        raise OutOfDomain(f"point {np.asarray(pos)} is outside the domain")
    return r


def neighbors_of(part: Partition, rank: int) -> tuple[int, ...]:
    if not 0 <= rank < part.n_ranks:
        raise OutOfDomain(f"rank {rank} not in partition")
    return part.neighbors[rank]


def min_subdomain_edge(part: Partition) -> float:
    return part.min_edge
