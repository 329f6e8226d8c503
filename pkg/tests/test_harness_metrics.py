import numpy as np
import pytest

from shadowdem import (
    IdSetMismatch,
    InvariantViolation,
    RunMetrics,
    ScenarioConfig,
    StepRecord,
    build_scenario,
    check_consistency,
    compare_snapshots,
    pupcs,
    read_metrics_csv,
    read_snapshot,
    run,
    strong_efficiency,
    sweep_bidisperse,
    weak_efficiency,
    write_snapshot,
)


# -- rate arithmetic -------------------------------------------------------------


def test_pupcs_examples():
    assert pupcs(100, 16000, 8.0, 1000) == 200.0
    assert pupcs(1, 1, 1.0, 1) == 1.0
    assert pupcs(0, 5000, 3.0, 4) == 0.0


def test_pupcs_doubling_invariance():
    # scaling work and resources by powers of two cancels exactly in floats
    base = pupcs(100, 12345, 0.71828, 8)
    assert pupcs(200, 12345, 2 * 0.71828, 8) == base  # more steps, more time
    assert pupcs(100, 4 * 12345, 0.71828, 32) == base  # more work, more cores


def test_pupcs_division_guards():
    with pytest.raises(ZeroDivisionError):
        pupcs(10, 10, 0.0, 4)
    with pytest.raises(ZeroDivisionError):
        pupcs(10, 10, 1.0, 0)


def test_scaling_efficiencies():
    assert weak_efficiency(19.6, 28.0) == pytest.approx(0.7)
    assert weak_efficiency(5.0, 5.0) == 1.0
    assert strong_efficiency(19.6, 2.8, 10) == pytest.approx(0.7)
    assert strong_efficiency(8.0, 1.0, 8) == 1.0


def fake_record(step, value):
    return StepRecord(
        step=step,
        broad=value,
        narrow=value / 2,
        resolve=value / 4,
        reduce=value / 8,
        integrate=value / 8,
        sync=value,
        messages=3,
        blocks=2,
        bytes=100,
        shadows=1,
    )


def test_step_record_total_is_sum_of_phases():
    r = fake_record(0, 0.4)
    assert r.total == 0.4 + 0.2 + 0.1 + 0.05 + 0.05 + 0.4


def test_run_metrics_rate_and_csv(tmp_path):
    records = [fake_record(i, 0.1) for i in range(4)]
    m = RunMetrics(particles=500, cores=2, records=records)
    assert m.seconds == pytest.approx(4 * records[0].total)
    assert m.rate == pytest.approx(pupcs(4, 500, m.seconds, 2))
    path = tmp_path / "metrics.csv"
    m.to_csv(path)
    rows = read_metrics_csv(path)
    assert len(rows) == 4
    assert set(rows[0]) == {
        "step", "broad", "narrow", "resolve", "reduce", "integrate", "sync",
        "messages", "blocks", "bytes", "shadows", "total", "pupcs_running",
    }
    assert float(rows[0]["total"]) == pytest.approx(records[0].total)
    # the running rate converges on the final rate
    assert float(rows[-1]["pupcs_running"]) == pytest.approx(m.rate)


# -- the run driver ----------------------------------------------------------------


def small_cfg(**kw):
    base = dict(cells=(6, 6, 6), grid=(2, 1, 1), steps=5)
    base.update(kw)
    return ScenarioConfig(**base)


def test_run_writes_all_artifacts(tmp_path):
    cfg = small_cfg()
    metrics, frame = run(cfg, tmp_path)
    assert (tmp_path / "config.txt").exists()
    assert (tmp_path / "metrics.csv").exists()
    assert (tmp_path / "snapshot.txt").exists()
    assert ScenarioConfig.from_file(tmp_path / "config.txt") == cfg
    assert metrics.particles == 216
    assert metrics.cores == 2
    assert len(metrics.records) == 5
    assert metrics.rate > 0
    assert len(frame["ids"]) == 216
    rows = read_metrics_csv(tmp_path / "metrics.csv")
    assert len(rows) == 5
    for row in rows:
        phases = sum(
            float(row[k])
            for k in ("broad", "narrow", "resolve", "reduce", "integrate", "sync")
        )
        assert phases == pytest.approx(float(row["total"]))


# -- snapshots ----------------------------------------------------------------------


def test_snapshot_round_trip(tmp_path):
    w = build_scenario(small_cfg())
    w.startup_sync()
    w.step(3)
    path = tmp_path / "snap.txt"
    write_snapshot(w, path)
    snap = read_snapshot(path)
    assert len(snap) == 216
    frame = w.masters_frame()
    for k, pid in enumerate(frame["ids"].tolist()):
        role, owner, pos, vel, radius = snap[pid]
        assert role == "master"
        assert list(pos) == frame["pos"][k].tolist()  # repr survives the trip
        assert list(vel) == frame["vel"][k].tolist()
        assert radius == 0.4
    # writing the same world twice is byte identical
    path2 = tmp_path / "snap2.txt"
    write_snapshot(w, path2)
    assert path.read_bytes() == path2.read_bytes()
    assert compare_snapshots(path, path2) == 0.0
    w.close()


def test_compare_snapshots_across_grids_is_exact(tmp_path):
    paths = []
    for tag, grid in [("a", (1, 1, 1)), ("b", (2, 2, 2))]:
        w = build_scenario(small_cfg(grid=grid, steps=0))
        w.startup_sync()
        w.step(8)
        p = tmp_path / f"{tag}.txt"
        write_snapshot(w, p)
        paths.append(p)
        w.close()
    assert compare_snapshots(*paths) == 0.0


def test_compare_snapshots_detects_divergence(tmp_path):
    w = build_scenario(small_cfg())
    w.startup_sync()
    w.step(2)
    a = tmp_path / "a.txt"
    write_snapshot(w, a)
    st = w.stores[0]
    st.vel[0, 0] += 0.25
    b = tmp_path / "b.txt"
    write_snapshot(w, b)
    assert compare_snapshots(a, b) == pytest.approx(0.25)
    w.close()


def test_compare_snapshots_rejects_different_populations(tmp_path):
    wa = build_scenario(small_cfg())
    wb = build_scenario(small_cfg(cells=(6, 6, 5)))
    pa, pb = tmp_path / "a.txt", tmp_path / "b.txt"
    write_snapshot(wa, pa)
    write_snapshot(wb, pb)
    with pytest.raises(IdSetMismatch):
        compare_snapshots(pa, pb)
    wa.close()
    wb.close()


# -- consistency checking --------------------------------------------------------------


def shadowed_world():
    """A two-rank world guaranteed to hold shadows after one sync."""
    w = build_scenario(small_cfg(radius=0.55, protocol="nns"))
    w.startup_sync()
    report = check_consistency(w)
    assert report["shadows"] > 0
    return w


def pick_shadow(world):
    for st in world.stores:
        for pid in st.shadow_ids():
            return st.rank, pid
    raise AssertionError("no shadows found")


def test_check_consistency_counts():
    w = shadowed_world()
    report = check_consistency(w)
    assert report["masters"] == 216
    w.step(3)
    assert check_consistency(w)["masters"] == 216
    w.close()


def test_check_consistency_flags_missing_shadow():
    w = shadowed_world()
    rank, pid = pick_shadow(w)
    w.stores[rank].remove(pid)
    with pytest.raises(InvariantViolation):
        check_consistency(w)
    w.close()


def test_check_consistency_flags_wrong_owner_field():
    w = shadowed_world()
    rank, pid = pick_shadow(w)
    st = w.stores[rank]
    st.owner[st.row_of(pid)] = 1 - int(st.owner[st.row_of(pid)])
    with pytest.raises(InvariantViolation):
        check_consistency(w)
    w.close()


def test_check_consistency_flags_registry_drift():
    # needs a third rank that legitimately holds nothing, to act as the phantom
    w = build_scenario(small_cfg(radius=0.55, protocol="nns", grid=(3, 1, 1)))
    w.startup_sync()
    check_consistency(w)
    rank, pid = pick_shadow(w)
    st = w.stores[rank]
    owner = int(st.owner[st.row_of(pid)])
    holders = {r for r in range(3) if pid in w.stores[r].index}
    phantom = ({0, 1, 2} - holders).pop()
    w.stores[owner].registry[pid].add(phantom)
    with pytest.raises(InvariantViolation):
        check_consistency(w)
    w.close()


def test_check_consistency_flags_double_master():
    from shadowdem.store import ROLE_MASTER

    w = shadowed_world()
    rank, pid = pick_shadow(w)
    st = w.stores[rank]
    st.role[st.row_of(pid)] = ROLE_MASTER
    with pytest.raises(InvariantViolation):
        check_consistency(w)
    w.close()


def test_check_consistency_flags_orphan_shadow():
    w = shadowed_world()
    w.stores[0].apply_create_shadow(424242, np.zeros(15), owner=1, src=1)
    with pytest.raises(InvariantViolation):
        check_consistency(w)
    w.close()


# -- sweeps -------------------------------------------------------------------------


def test_sweep_bidisperse_skips_illegal_and_writes_csv(tmp_path):
    base = ScenarioConfig(scenario="large", cells=(12, 12, 12), periodic=True)
    out = tmp_path / "sweep.csv"
    rows = sweep_bidisperse(
        base,
        radii=[3.0, 7.0],
        protocols=["nns", "sos"],
        grids=[(2, 2, 2)],
        steps=2,
        out_csv=out,
    )
    # subdomain edge is 6: radius 7 under next-neighbor sync is impossible
    combos = {(r["radius"], r["strategy"]) for r in rows}
    assert combos == {(3.0, "nns"), (3.0, "sos"), (7.0, "sos")}
    assert all(r["edge"] == 6.0 for r in rows)
    assert all(r["pupcs"] > 0 for r in rows)
    text = out.read_text().splitlines()
    assert text[0] == "radius,strategy,edge,pupcs"
    assert len(text) == 1 + len(rows)
