"""Axis-aligned boxes and minimum-image arithmetic on a (possibly) periodic domain.

Vectors are plain numpy arrays of shape (3,); most functions also accept
batches of shape (n, 3) and then return arrays.  All membership tests use
half-open intervals [lo, hi) so that a point on a shared face belongs to
exactly one box, and sphere/box overlap is strict: tangency does not count
as overlap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Vec3 = np.ndarray


def vec3(x: float, y: float, z: float) -> Vec3:
    return np.array([x, y, z], dtype=np.float64)


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box.  lo is inclusive, hi exclusive."""

    lo: np.ndarray
    hi: np.ndarray

    @property
    def center(self) -> np.ndarray:
        return (self.lo + self.hi) * 0.5

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo


@dataclass(frozen=True)
class DomainBox:
    """The global simulation box plus a periodicity flag per axis."""

    bounds: Aabb
    periodic: tuple[bool, bool, bool] = (False, False, False)

    @property
    def lo(self) -> np.ndarray:
        return self.bounds.lo

    @property
    def hi(self) -> np.ndarray:
        return self.bounds.hi

    @property
    def extent(self) -> np.ndarray:
        return self.bounds.extent


def make_domain(extent, periodic=(False, False, False), origin=(0.0, 0.0, 0.0)) -> DomainBox:
    origin = np.asarray(origin, dtype=np.float64)
    extent = np.asarray(extent, dtype=np.float64)
    return DomainBox(Aabb(origin, origin + extent), tuple(bool(p) for p in periodic))


def contains_point(box: Aabb, p) -> bool:
    p = np.asarray(p, dtype=np.float64)
    return bool(np.all((p >= box.lo) & (p < box.hi)))


def min_image(delta, domain: DomainBox):
    """Map a separation vector onto its periodic minimum image.

    Periodic components land in (-L/2, +L/2]; non-periodic components pass
    through unchanged.  Accepts (3,) or (n, 3) input.
    """
    d = np.array(delta, dtype=np.float64, copy=True)
    L = domain.extent
    for a in range(3):
        if domain.periodic[a]:
            # ceil(x/L - 1/2) picks the unique integer shift into (-L/2, L/2]
            d[..., a] -= L[a] * np.ceil(d[..., a] / L[a] - 0.5)
    return d


def wrap_position(pos, domain: DomainBox):
    """Return the canonical position with periodic components folded into [lo, hi)."""
    p = np.array(pos, dtype=np.float64, copy=True)
    for a in range(3):
        if domain.periodic[a]:
            L = domain.extent[a]
            p[..., a] = domain.lo[a] + np.mod(p[..., a] - domain.lo[a], L)
    return p


def _axis_gaps(center, box: Aabb, domain: DomainBox):
    """Per-axis distance from a point to the box under the domain metric.

    On periodic axes the point is first unwrapped to its image nearest the
    box center, which is the nearest image to the box itself for any box no
    wider than the domain.
    """
    c = np.asarray(center, dtype=np.float64)
    shifted = min_image(c - box.center, domain) + box.center
    return np.maximum(np.maximum(box.lo - shifted, shifted - box.hi), 0.0)


def sphere_overlaps_aabb(center, radius, box: Aabb, domain: DomainBox):
    """True when the open sphere intersects the closed box (tangency excluded).

    Batched: center of shape (n, 3) with scalar or (n,) radius returns a
    boolean array.
    """
    g = _axis_gaps(center, box, domain)
    r = np.asarray(radius, dtype=np.float64)
    hit = np.sum(g * g, axis=-1) < r * r
    if hit.ndim == 0:
        return bool(hit)
    return hit
