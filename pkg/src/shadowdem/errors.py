"""Exception types raised by the engine.

Everything here derives from ShadowDemError so callers can catch the whole
family at once.  Protocol-level violations (InvariantViolation) indicate a
bug in the engine or a corrupted message stream, never a user mistake.
"""


class ShadowDemError(Exception):
    """Base class for all engine errors."""


class ZeroDimension(ShadowDemError):
    """A partition grid dimension was zero or negative."""


class OutOfDomain(ShadowDemError):
    """A point lies outside the domain on a non-periodic axis."""


class InvalidRank(ShadowDemError):
    """A rank id outside [0, n_ranks)."""


class DuplicateId(ShadowDemError):
    """A particle id was inserted twice on the same rank."""


class UnknownId(ShadowDemError):
    """An operation referenced a particle id not present on this rank."""


class WrongDomain(ShadowDemError):
    """A master particle was inserted on a rank that does not own its center."""


class InvariantViolation(ShadowDemError):
    """A protocol invariant was broken; indicates a bug, not bad input."""


class AssumptionViolated(ShadowDemError):
    """Next-neighbor synchronization used with a particle radius that is not
    smaller than the smallest subdomain edge."""


class DisplacementGuard(ShadowDemError):
    """A particle moved at least its own species' minimum radius in one step,
    which would let it skip a subdomain and break one-hop synchronization."""


class DegenerateCenters(ShadowDemError):
    """Two sphere centers coincide; the contact normal is undefined."""


class IdSetMismatch(ShadowDemError):
    """Two snapshots do not contain the same master particle ids."""


class ConfigMismatch(ShadowDemError):
    """A scenario configuration combines incompatible settings."""
