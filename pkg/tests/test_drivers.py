"""Overlay drivers exercised through the event engine."""

from tssim.drivers import (
    IntervalDriver,
    MeshDriver,
    TreeDriver,
    TurntableSettings,
)
from tssim.engine import DEDICATED, Engine, NetworkModel, PeerState
from tssim.stream import StreamParams, build_timeline
from tssim.turntable import sector_of_chunk
from tssim.workload import (
    BehaviorParams,
    PeerProfile,
    SessionEvent,
    SessionEventKind,
    generate_profiles,
    generate_sessions,
)


def run_engine(driver, sessions, horizon, network=None, checked=True,
               profiles=None):
    if profiles is None:
        profiles = {
            e.peer_id: PeerProfile(peer_id=e.peer_id, upload_capacity=3,
                                   storage_capacity=100_000, join_time=e.time)
            for e in sessions if e.kind is SessionEventKind.JOIN
        }
    engine = Engine(
        stream=StreamParams(),
        network=network or NetworkModel(),
        horizon=horizon,
        driver=driver,
        check_invariants=checked,
    )
    engine.run(sessions, profiles)
    return engine


def generated_run(driver, horizon=1800.0, seed=5):
    stream = StreamParams()
    timeline = build_timeline(stream, horizon)
    sessions = generate_sessions(BehaviorParams(), timeline, horizon, seed)
    profiles = generate_profiles(sessions)
    return run_engine(driver, sessions, horizon, profiles=profiles)


def join(t, pid, position):
    return SessionEvent(time=t, peer_id=pid, kind=SessionEventKind.JOIN,
                        position=position)


def leave(t, pid, abrupt=False):
    return SessionEvent(time=t, peer_id=pid, kind=SessionEventKind.LEAVE,
                        abrupt=abrupt)


# -- tree --------------------------------------------------------------------


class SectorLawDriver(TreeDriver):
    """Re-verifies the assignment law over all live pins at every audit.

    Sessions all end by the horizon, so the interesting state only
    exists mid-run; the audit timer is the natural sampling point.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.law_checks = 0
        self.law_violations = 0

    def on_audit(self, now):
        for pid, sector in sorted(self.turntable.sector_of_peer.items()):
            for chunk in self.engine.peers[pid].pinned:
                self.law_checks += 1
                if sector_of_chunk(chunk, self.settings.m) != sector:
                    self.law_violations += 1
        super().on_audit(now)


def test_tree_pins_land_in_matching_sectors():
    driver = SectorLawDriver(TurntableSettings())
    generated_run(driver)
    assert driver.law_checks > 0
    assert driver.law_violations == 0


def test_tree_handoff_shortcut_serves_consecutive_chunks():
    class SpyDriver(TreeDriver):
        shortcut_hits = 0

        def find_provider(self, peer_id, chunk_id, now):
            expected = self.pending_handoff.get((peer_id, chunk_id))
            outcome = super().find_provider(peer_id, chunk_id, now)
            if expected is not None and outcome[0] == expected:
                SpyDriver.shortcut_hits += 1
            return outcome

    driver = SpyDriver(TurntableSettings(m=2, r=1, k_rep=1, k_min=1))
    sessions = [
        join(1.0, 0, 0),     # sector 0 root, pins even chunks
        join(2.0, 1, 0),     # sector 1 root, pins odd chunks
        join(640.0, 2, 0),   # lagging viewer, walks the whole archive
    ]
    # transfers must outpace playback for the next-chunk offer to land
    # before the viewer asks for it
    fast = NetworkModel(upload_kbps=8000.0)
    engine = run_engine(driver, sessions, horizon=3600.0, network=fast)
    assert SpyDriver.shortcut_hits > 10
    assert engine.counters["chunks_missed"] == 0


def test_tree_republishes_chunks_retained_while_sector_empty():
    driver = TreeDriver(TurntableSettings(m=2, r=1, k_rep=1, k_min=1))
    engine = run_engine(driver, [join(200.0, 0, 10_000)], horizon=300.0)
    # chunks 0..5 existed at the join; the evens replay into sector 0
    assert driver.retained_republished == 3
    assert {0, 2, 4} <= set(engine.peers[0].store)
    # sector 1 never gained a member, so its chunks stay parked
    assert driver.turntable.retained_for(1) == [1, 3, 5, 7]


def test_tree_audit_removes_abruptly_departed_members():
    driver = TreeDriver(TurntableSettings(m=1, r=1, k_rep=1, k_min=1))
    sessions = [
        join(1.0, 0, 10_000),
        join(2.0, 1, 10_000),
        leave(100.0, 1, abrupt=True),
    ]
    engine = run_engine(driver, sessions, horizon=900.0)
    assert 1 not in driver.trees[0].nodes
    assert engine.peers[1].state is PeerState.DEPARTED
    assert 0 in driver.trees[0].nodes


def test_tree_emergency_restores_replicas_after_holder_leaves():
    driver = TreeDriver(TurntableSettings(m=1, r=1, k_rep=2, k_min=2))
    sessions = [
        join(1.0, 0, 10_000),   # root
        join(2.0, 1, 10_000),   # holders: the two deepest members
        join(3.0, 2, 10_000),
        leave(500.0, 1),
    ]
    engine = run_engine(driver, sessions, horizon=1000.0)
    assert driver.emergency_rounds > 0
    assert driver.permanent_losses == 0
    for chunk in range(engine.head_chunk + 1):
        assert driver.trees[0].replica_count(chunk) == 2


# -- mesh ---------------------------------------------------------------------


class MirrorCheckDriver(MeshDriver):
    """Confirms at every audit that overlay stores shadow engine stores."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.mirrored = 0
        self.mismatches = 0

    def on_audit(self, now):
        for mesh in self.meshes:
            for pid in sorted(mesh.peers):
                if self.engine.peers[pid].state is PeerState.DEPARTED:
                    continue
                runtime = self.engine.peers[pid]
                for chunk in mesh.peers[pid].store:
                    self.mirrored += 1
                    if chunk not in runtime.store or chunk not in runtime.pinned:
                        self.mismatches += 1
        super().on_audit(now)


def test_mesh_gossip_runs_and_mirrors_pins_into_engine_stores():
    driver = MirrorCheckDriver(TurntableSettings(), seed=5)
    generated_run(driver, seed=5)
    assert sum(m.shuffle_messages for m in driver.meshes) > 0
    assert driver.mirrored > 0
    assert driver.mismatches == 0


def test_mesh_invariants_hold_after_generated_run():
    driver = MeshDriver(TurntableSettings(), seed=9)
    engine = generated_run(driver, seed=9)
    for mesh in driver.meshes:
        assert mesh.check_invariants(engine.now) == []
    extra = driver.extra_metrics()
    assert extra["permanent_losses"] >= 0
    assert extra["domination_violations"] >= 0
    assert set(extra) >= {"coloring_gaps", "recolor_events", "route_detours",
                          "stale_view_evictions"}


# -- interval -----------------------------------------------------------------


def test_interval_overlay_tracks_membership_and_coverage():
    driver = IntervalDriver()
    engine = generated_run(driver, seed=7)
    alive_members = [pid for pid in driver.graph.vertices if pid != DEDICATED]
    for pid in alive_members:
        assert engine.peers[pid].state is not PeerState.DEPARTED
    extra = driver.extra_metrics()
    assert extra["members_final"] == len(alive_members)
    assert 0.0 <= extra["coverage_incident_fraction"] <= 1.0
    assert driver.coverage_samples >= 2  # periodic plus final sample
    assert sum(driver.requests_by_lag.values()) > 0
    hot, cold = driver.buffer_length_by_decile()
    assert hot >= 0.0 and cold >= 0.0


def test_interval_abrupt_leaver_disappears_without_repair():
    driver = IntervalDriver()
    sessions = [
        join(40.0, 0, 0),
        join(41.0, 1, 0),
        join(42.0, 2, 0),
        leave(100.0, 1, abrupt=True),
    ]
    run_engine(driver, sessions, horizon=200.0)
    assert 1 not in driver.graph.vertices
    assert 0 in driver.graph.vertices
    assert 2 in driver.graph.vertices


def test_interval_dedicated_server_covers_without_producer_archive():
    driver = IntervalDriver(dedicated_server=True, producer_archive=False)
    engine = run_engine(driver, [join(3200.0, 0, 10)], horizon=3600.0)
    assert DEDICATED in driver.graph.vertices
    assert engine.counters["chunks_delivered"] > 0
    assert engine.counters["chunks_missed"] == 0
    assert engine.counters["producer_upload_bytes"] > 0


def test_interval_no_archive_no_members_means_misses():
    driver = IntervalDriver(dedicated_server=False, producer_archive=False)
    engine = run_engine(driver, [join(3200.0, 0, 10)], horizon=3600.0)
    assert engine.counters["chunks_delivered"] == 0
    assert engine.counters["chunks_missed"] > 0
