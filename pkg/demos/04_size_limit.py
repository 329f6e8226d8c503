"""Where the next-neighbor protocol stops and the shadow-owner one carries on.

A protocol that only ever talks to adjacent ranks can keep shadows
correct only while every particle fits between opposite faces of a
subdomain: radius below the smallest subdomain edge.  The engine checks
that bound at insertion time, before any communication happens, so a
doomed run fails in microseconds instead of corrupting state hours in.
"""

import numpy as np

from shadowdem import (
    AssumptionViolated,
    ContactParams,
    Particle,
    World,
    make_domain,
    make_particle_id,
)

GRID = (4, 4, 4)
domain = make_domain(np.array([40.0, 40.0, 40.0]))
params = ContactParams(kn=5.0, gamma_n=0.2, dt=0.05)
giant = Particle(make_particle_id(0, 0), np.array([20.0, 20.0, 20.0]), np.zeros(3), 14.0, 1.0)

print(f"subdomain edge {domain.extent[0] / GRID[0]:g}, particle radius {giant.radius:g}\n")

nns = World(domain, GRID, params, protocol="nns")
try:
    nns.insert(giant)
except AssumptionViolated as e:
    print(f"next-neighbor protocol: {e}")
print(f"exchanges before the refusal: {nns.transport.exchanges}\n")
nns.close()

sos = World(domain, GRID, params, protocol="sos")
sos.insert(giant)
rounds = sos.startup_sync()
footprint = sum(1 for st in sos.stores if st.count > 0)
print(f"shadow-owner protocol: accepted, {rounds} startup syncs,")
print(f"copies on {footprint} of {sos.part.n_ranks} ranks")
sos.step(20)
pos = sos.masters_frame()["pos"][0]
print(f"20 steps later the giant sits at {np.round(pos, 6).tolist()}, business as usual")
sos.close()
