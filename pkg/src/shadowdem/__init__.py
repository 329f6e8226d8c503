"""Distributed rigid-sphere dynamics on in-process ranks.

The engine advances spheres under a damped linear contact model while a
domain decomposition spreads them over message-passing ranks.  Particles
near subdomain boundaries exist as an authoritative master plus read-only
shadows, kept consistent by one of two interchangeable protocols: the
one-exchange next-neighbor scheme, valid while every particle fits next
to a subdomain, and the two-exchange shadow-owner scheme, which lets a
particle span arbitrarily many subdomains.  Physics is bitwise identical
across rank counts, protocols, and execution modes.
"""

from .errors import (
    AssumptionViolated,
    ConfigMismatch,
    DegenerateCenters,
    DisplacementGuard,
    DuplicateId,
    IdSetMismatch,
    InvalidRank,
    InvariantViolation,
    OutOfDomain,
    ShadowDemError,
    UnknownId,
    WrongDomain,
    ZeroDimension,
)
from .geometry import (
    Aabb,
    DomainBox,
    contains_point,
    make_domain,
    min_image,
    sphere_overlaps_aabb,
    wrap_position,
)
from .partition import (
    Partition,
    build_partition,
    min_subdomain_edge,
    neighbors_of,
    owner_indices,
    owner_of,
)
from .transport import (
    Msg,
    MsgKind,
    SequentialRunner,
    ThreadedRunner,
    Transport,
    decode_message,
    encode_message,
    message_size,
)
from .store import Particle, ParticleStore, make_particle_id, reduce_forces
from .sync import required_startup_syncs, sync_next_neighbor, sync_shadow_owners
from .dynamics import ContactParams, Contact, Wall, World, pair_contact
from .metrics import (
    RunMetrics,
    StepRecord,
    pupcs,
    read_metrics_csv,
    strong_efficiency,
    weak_efficiency,
)
from .scenarios import (
    ScenarioConfig,
    build_dense,
    build_large,
    build_scenario,
    build_sparse,
    default_config,
    near_cubic_grid,
    validate_config,
)
from .harness import (
    check_consistency,
    compare_snapshots,
    read_snapshot,
    run,
    sweep_bidisperse,
    write_snapshot,
)

__version__ = "0.1.0"

__all__ = [
    "Aabb",
    "AssumptionViolated",
    "ConfigMismatch",
    "Contact",
    "ContactParams",
    "DegenerateCenters",
    "DisplacementGuard",
    "DomainBox",
    "DuplicateId",
    "IdSetMismatch",
    "InvalidRank",
    "InvariantViolation",
    "Msg",
    "MsgKind",
    "OutOfDomain",
    "Particle",
    "ParticleStore",
    "Partition",
    "RunMetrics",
    "ScenarioConfig",
    "SequentialRunner",
    "ShadowDemError",
    "StepRecord",
    "ThreadedRunner",
    "Transport",
    "UnknownId",
    "Wall",
    "World",
    "WrongDomain",
    "ZeroDimension",
    "build_dense",
    "build_large",
    "build_partition",
    "build_scenario",
    "build_sparse",
    "check_consistency",
    "compare_snapshots",
    "contains_point",
    "decode_message",
    "default_config",
    "encode_message",
    "make_domain",
    "make_particle_id",
    "message_size",
    "min_image",
    "min_subdomain_edge",
    "near_cubic_grid",
    "neighbors_of",
    "owner_indices",
    "owner_of",
    "pair_contact",
    "pupcs",
    "read_metrics_csv",
    "read_snapshot",
    "reduce_forces",
    "required_startup_syncs",
    "run",
    "sphere_overlaps_aabb",
    "strong_efficiency",
    "sweep_bidisperse",
    "sync_next_neighbor",
    "sync_shadow_owners",
    "validate_config",
    "weak_efficiency",
    "wrap_position",
    "write_snapshot",
]
