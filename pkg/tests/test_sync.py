import numpy as np
import pytest

from shadowdem import (
    ContactParams,
    Particle,
    World,
    make_domain,
    required_startup_syncs,
    sphere_overlaps_aabb,
)


def quiet_params():
    return ContactParams(kn=1.0, gamma_n=0.0, dt=0.01)


def particle(pid, pos, radius=1.0, vel=(0, 0, 0)):
    return Particle(pid, np.asarray(pos, float), np.asarray(vel, float), radius, 1.0)


def master_rank(world, pid):
    hits = [
        r
        for r, st in enumerate(world.stores)
        if pid in st.index and st.is_master(pid)
    ]
    assert len(hits) == 1, f"{pid} has {len(hits)} masters"
    return hits[0]


def shadow_ranks(world, pid):
    return {
        r
        for r, st in enumerate(world.stores)
        if pid in st.index and not st.is_master(pid)
    }


def overlap_ranks(world, pid):
    """Geometric ground truth: every rank whose subdomain the sphere overlaps."""
    r = master_rank(world, pid)
    st = world.stores[r]
    row = st.row_of(pid)
    return {
        k
        for k in range(world.part.n_ranks)
        if sphere_overlaps_aabb(
            st.pos[row], float(st.radius[row]), world.part.box(k), world.part.domain
        )
    }


def move_master(world, pid, pos):
    r = master_rank(world, pid)
    world.stores[r].pos[world.stores[r].row_of(pid)] = pos


def test_required_startup_syncs_values():
    assert required_startup_syncs(0.4, 10.0) == 2
    assert required_startup_syncs(5.0, 10.0) == 2
    assert required_startup_syncs(10.0, 10.0) == 2
    assert required_startup_syncs(15.0, 10.0) == 3
    assert required_startup_syncs(25.0, 10.0) == 4
    with pytest.raises(ValueError):
        required_startup_syncs(0.0, 10.0)
    with pytest.raises(ValueError):
        required_startup_syncs(1.0, 0.0)


@pytest.mark.parametrize("protocol", ["nns", "sos"])
def test_interior_particle_is_silent(protocol):
    w = World(make_domain((20.0, 10.0, 10.0)), (2, 1, 1), quiet_params(), protocol)
    w.insert(particle(1, (5.0, 5.0, 5.0)))
    w.sync()
    w.sync()
    assert w.transport.messages_total == 0
    assert shadow_ranks(w, 1) == set()
    w.close()


@pytest.mark.parametrize("protocol", ["nns", "sos"])
def test_shadow_created_then_withdrawn(protocol):
    w = World(make_domain((20.0, 10.0, 10.0)), (2, 1, 1), quiet_params(), protocol)
    w.insert(particle(1, (9.5, 5.0, 5.0)))
    w.sync()
    assert master_rank(w, 1) == 0
    assert shadow_ranks(w, 1) == {1}
    assert w.stores[0].registry[1] == {1}
    # the shadow is a faithful copy
    st1 = w.stores[1]
    assert st1.pos[st1.row_of(1)].tolist() == [9.5, 5.0, 5.0]
    assert int(st1.owner[st1.row_of(1)]) == 0

    move_master(w, 1, (5.0, 5.0, 5.0))
    w.sync()
    if protocol == "sos":
        w.sync()  # detachment is noticed by the shadow one round later
    assert shadow_ranks(w, 1) == set()
    assert w.stores[0].registry[1] == set()
    w.close()


@pytest.mark.parametrize("protocol", ["nns", "sos"])
def test_ownership_transfer_keeps_trailing_shadow(protocol):
    w = World(make_domain((20.0, 10.0, 10.0)), (2, 1, 1), quiet_params(), protocol)
    w.insert(particle(1, (9.5, 5.0, 5.0)))
    w.sync()
    move_master(w, 1, (10.5, 5.0, 5.0))
    w.sync()
    assert master_rank(w, 1) == 1
    assert shadow_ranks(w, 1) == {0}
    assert w.stores[1].registry[1] == {0}
    st0 = w.stores[0]
    assert int(st0.owner[st0.row_of(1)]) == 1
    # and back again
    move_master(w, 1, (9.4, 5.0, 5.0))
    w.sync()
    assert master_rank(w, 1) == 0
    assert shadow_ranks(w, 1) == {1}
    w.close()


def test_nns_registry_matches_overlap_set_exactly():
    rng = np.random.default_rng(3)
    w = World(make_domain((20.0, 20.0, 10.0)), (2, 2, 1), quiet_params(), "nns")
    w.insert(particle(1, (9.0, 9.0, 5.0), radius=1.5))
    for _ in range(30):
        w.sync()
        owner = master_rank(w, 1)
        expect = overlap_ranks(w, 1)
        assert w.stores[owner].registry[1] == expect - {owner}
        assert shadow_ranks(w, 1) == expect - {owner}
        # random small hop, staying inside the domain
        r = w.stores[owner]
        row = r.row_of(1)
        r.pos[row] = np.clip(
            r.pos[row] + rng.uniform(-1.2, 1.2, 3), 1.6, [18.4, 18.4, 8.4]
        )
    w.close()


def test_nns_exchange_budget_is_one_per_sync():
    w = World(make_domain((20.0, 10.0, 10.0)), (2, 1, 1), quiet_params(), "nns")
    w.insert(particle(1, (9.5, 5.0, 5.0)))
    before = w.transport.exchanges
    w.sync()
    assert w.transport.exchanges - before == 1
    w.close()


def test_sos_exchange_budget_is_two_per_sync():
    w = World(make_domain((20.0, 10.0, 10.0)), (2, 1, 1), quiet_params(), "sos")
    w.insert(particle(1, (9.5, 5.0, 5.0)))
    before = w.transport.exchanges
    w.sync()
    assert w.transport.exchanges - before == 2
    w.close()


def test_out_of_domain_particle_is_dropped_everywhere():
    w = World(
        make_domain((20.0, 10.0, 10.0)), (2, 1, 1), quiet_params(), "nns", trace=True
    )
    w.insert(particle(1, (9.5, 5.0, 5.0)))
    w.sync()
    assert shadow_ranks(w, 1) == {1}
    move_master(w, 1, (9.5, 5.0, -0.7))  # fell through an open face
    w.sync()
    assert all(1 not in st.index for st in w.stores)
    assert w.total_masters() == 0
    assert ("dead", 1, 1) in w.trace
    w.close()


def test_sos_diffusion_spreads_one_layer_per_round():
    # a sphere spanning dozens of subdomains, legal only under shadow-owner sync
    w = World(make_domain((70.0, 70.0, 70.0)), (7, 7, 7), quiet_params(), "sos")
    w.insert(particle(1, (35.0, 35.0, 35.0), radius=25.0))
    owner = master_rank(w, 1)
    expect = overlap_ranks(w, 1)
    assert len(expect) > 50  # genuinely many-rank
    max_hops = max(w.part.hops(owner, r) for r in expect)
    assert max_hops == 2
    for k in range(1, required_startup_syncs(25.0, 10.0) + 1):
        w.sync()
        reachable = {r for r in expect if w.part.hops(owner, r) <= k}
        assert shadow_ranks(w, 1) == reachable - {owner}
    # converged: the registry mirrors the shadows, every copy knows the owner
    assert w.stores[owner].registry[1] == expect - {owner}
    for r in expect - {owner}:
        st = w.stores[r]
        assert int(st.owner[st.row_of(1)]) == owner
    # further rounds change nothing
    msgs = w.transport.messages_total
    w.sync()
    assert shadow_ranks(w, 1) == expect - {owner}
    w.close()


def test_sos_startup_matches_world_helper():
    w = World(make_domain((70.0, 70.0, 70.0)), (7, 7, 7), quiet_params(), "sos")
    w.insert(particle(1, (30.5, 30.5, 30.5), radius=25.0))
    rounds = w.startup_sync()
    assert rounds == required_startup_syncs(25.0, 10.0)
    assert shadow_ranks(w, 1) == overlap_ranks(w, 1) - {master_rank(w, 1)}
    w.close()


def test_sos_copies_track_a_moving_master():
    w = World(make_domain((70.0, 70.0, 70.0)), (7, 7, 7), quiet_params(), "sos")
    w.insert(particle(1, (35.0, 35.0, 35.0), radius=25.0))
    w.startup_sync()
    for step in range(8):
        move_master(w, 1, (35.0 + 0.3 * (step + 1), 35.0, 35.0))
        w.sync()
        owner = master_rank(w, 1)
        st = w.stores[owner]
        want = st.pos[st.row_of(1)].tolist()
        for r in shadow_ranks(w, 1):
            sr = w.stores[r]
            assert sr.pos[sr.row_of(1)].tolist() == want
        # coverage convergence is maintained step by step
        assert shadow_ranks(w, 1) == overlap_ranks(w, 1) - {owner}
    w.close()


def test_sos_self_delete_clears_resend_suppression():
    w = World(make_domain((30.0, 10.0, 10.0)), (3, 1, 1), quiet_params(), "sos")
    w.insert(particle(1, (9.5, 5.0, 5.0), radius=2.0))
    w.sync()
    assert shadow_ranks(w, 1) == {1}
    assert w.caches[0].get(1) == {1}
    move_master(w, 1, (5.0, 5.0, 5.0))
    w.sync()
    w.sync()
    assert shadow_ranks(w, 1) == set()
    assert w.stores[0].registry[1] == set()
    assert 1 not in w.caches[0]  # suppression dropped, re-creation possible
    move_master(w, 1, (9.5, 5.0, 5.0))
    w.sync()
    assert shadow_ranks(w, 1) == {1}
    st1 = w.stores[1]
    assert st1.pos[st1.row_of(1)].tolist() == [9.5, 5.0, 5.0]
    w.close()


def test_sos_remote_create_registers_with_owner():
    # owner's sphere reaches a rank two hops away; the middle copy relays the
    # creation and the owner must still learn about the far registration
    w = World(make_domain((30.0, 10.0, 10.0)), (3, 1, 1), quiet_params(), "sos")
    w.insert(particle(1, (14.0, 5.0, 5.0), radius=7.0))
    owner = master_rank(w, 1)
    assert owner == 1
    w.sync()  # round 1: direct neighbors 0 and 2
    assert shadow_ranks(w, 1) == {0, 2}
    assert w.stores[1].registry[1] == {0, 2}
    w.close()


def test_sos_duplicate_offers_are_harmless():
    # two copies overlap the same empty destination in the same round; the
    # duplicate creation must be dropped and both senders remembered
    w = World(make_domain((30.0, 30.0, 10.0)), (3, 3, 1), quiet_params(), "sos")
    w.insert(particle(1, (15.0, 15.0, 5.0), radius=13.0))
    owner = master_rank(w, 1)
    w.startup_sync()
    expect = overlap_ranks(w, 1)
    assert shadow_ranks(w, 1) == expect - {owner}
    # corner ranks heard the offer from several intermediate copies
    corner = w.part.rank_of(0, 0, 0)
    if corner in expect:
        assert len(w.stores[corner].requesters[1]) >= 1
    for st in w.stores:
        assert sorted(st.index) == sorted(set(st.index))
    w.close()


def test_trace_records_creation_and_death():
    w = World(
        make_domain((20.0, 10.0, 10.0)), (2, 1, 1), quiet_params(), "sos", trace=True
    )
    w.insert(particle(1, (9.5, 5.0, 5.0)))
    w.sync()
    assert ("create", 0, 1, 1) in w.trace
    move_master(w, 1, (5.0, 5.0, 5.0))
    w.sync()
    w.sync()
    assert ("dead", 1, 1) in w.trace
    creates = [e for e in w.trace if e[0] == "create"]
    deads = [e for e in w.trace if e[0] == "dead"]
    assert len(creates) == 1 and len(deads) == 1
    w.close()


def test_periodic_wraparound_shadows():
    # periodic x: a sphere at the low face must shadow onto the far rank
    dom = make_domain((20.0, 10.0, 10.0), periodic=(True, False, False))
    for protocol in ("nns", "sos"):
        w = World(dom, (2, 1, 1), quiet_params(), protocol)
        w.insert(particle(1, (0.4, 5.0, 5.0)))
        w.sync()
        assert shadow_ranks(w, 1) == {1}
        st1 = w.stores[1]
        assert st1.pos[st1.row_of(1)].tolist() == [0.4, 5.0, 5.0]
        w.close()


def test_periodic_ownership_wrap():
    # a real step carries the particle through the periodic face: the
    # integrator wraps the position, then sync moves ownership to the far rank
    dom = make_domain((20.0, 10.0, 10.0), periodic=(True, False, False))
    w = World(dom, (2, 1, 1), quiet_params(), "nns")
    w.insert(particle(1, (0.4, 5.0, 5.0), vel=(-80.0, 0.0, 0.0)))
    w.sync()
    w.step()
    assert master_rank(w, 1) == 1
    st1 = w.stores[1]
    assert st1.pos[st1.row_of(1)][0] == pytest.approx(19.6)
    # the old rank keeps a trailing shadow through the face
    assert shadow_ranks(w, 1) == {0}
    w.close()
