"""Watch a giant particle's shadows spread one subdomain per sync call.

A sphere of radius 25 sits in the middle of a 70 x 70 x 70 box split into
7 x 7 x 7 ranks (subdomain edge 10).  The sphere overlaps ranks up to two
hops away from its owner, so no single exchange with direct neighbors can
place all of its copies.  The shadow-owner protocol reaches them anyway:
each sync, every rank that already holds a copy offers it to the adjacent
ranks the sphere overlaps.
"""

import numpy as np

from shadowdem import ContactParams, Particle, World, make_domain, make_particle_id

EDGE = 10.0
GRID = (7, 7, 7)

domain = make_domain(np.array(GRID, dtype=np.float64) * EDGE)
world = World(domain, GRID, ContactParams(kn=1.0, gamma_n=0.0, dt=0.01), protocol="sos")
center = np.array([35.0, 35.0, 35.0])
world.insert(Particle(make_particle_id(0, 0), center, np.zeros(3), 25.0, 1.0))

print(f"radius 25 sphere at {center.tolist()}, subdomain edge {EDGE:g}")
print(f"owner rank: {world.part.index_of(3 + 7 * (3 + 7 * 3))} (grid index)\n")


def holders():
    return {r for r, st in enumerate(world.stores) if st.count > 0}


def slice_map(ranks, k):
    rows = []
    for j in reversed(range(GRID[1])):
        row = "".join(
            "#" if (i + GRID[0] * (j + GRID[1] * k)) in ranks else "."
            for i in range(GRID[0])
        )
        rows.append("  " + row)
    return "\n".join(rows)


for round_no in range(1, 4):
    world.sync()
    ranks = holders()
    print(f"after sync {round_no}: copies on {len(ranks)} ranks")
    print(slice_map(ranks, k=3))
    print()

print("the middle z-slice fills outward one ring per call, like a stencil")
world.close()
