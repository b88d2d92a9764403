"""Overlay drivers: the glue between the event engine and each design.

A driver translates engine lifecycle calls (join, leave, produce,
request) into operations on its overlay structures and reports overlay
metrics back. Three designs are wired here: the sector tree, the sector
gossip mesh, and the lag-interval assignment. The first two share the
turntable's rotating sector layout; the third has no sectors at all.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from tssim.engine import DEDICATED, PRODUCER, OverlayDriver, PeerState
from tssim.interval import (
    Interval,
    IntervalGraph,
    OverlayConstraints,
    OverlayEvent,
    coverage_gaps_fast,
    repair_on_event,
    rebalance,
)
from tssim.mesh import ColorScheme, SectorMesh
from tssim.tree import SectorTree
from tssim.turntable import HookupRequest, RouteOutcome, Turntable, sector_of_chunk


@dataclass
class TurntableSettings:
    m: int = 12
    r: int = 2
    k_rep: int = 3
    k_min: int = 2
    producer_archive: bool = True


class _TurntableDriver(OverlayDriver):
    """Shared sector bookkeeping for the tree and mesh variants."""

    def __init__(self, settings: TurntableSettings):
        self.settings = settings
        self.turntable = Turntable(m=settings.m, r=settings.r)
        self.permanent_losses = 0
        self.emergency_rounds = 0
        self.retained_republished = 0

    def on_produce(self, chunk_id: int, now: float) -> None:
        sends = self.turntable.publish_chunk(chunk_id)
        for rep, chunk in sends:
            eng = self.engine
            eng.counters["producer_upload_bytes"] += eng.stream.chunk_size_bytes
            eng.send_control(PRODUCER, rep, ("publish", chunk), hops=1)

    def _flush_retained(self, sector: int, now: float) -> None:
        chunks = self.turntable.clear_retained(sector)
        if not chunks:
            return
        reps = self.turntable.representants_of(sector)
        if not reps:
            return
        eng = self.engine
        for chunk in chunks:
            eng.counters["producer_upload_bytes"] += eng.stream.chunk_size_bytes
            eng.send_control(PRODUCER, reps[0], ("publish", chunk), hops=1)
            self.retained_republished += 1

    def on_message(self, src: int, dst: int, message: tuple, now: float) -> None:
        if message[0] == "publish":
            peer = self.engine.peers.get(dst)
            if peer is None or peer.state is PeerState.DEPARTED:
                self.engine.counters["dropped_messages"] += 1
                self.turntable.retain_for_sector(
                    sector_of_chunk(message[1], self.settings.m), message[1])
                return
            self.diffuse(dst, message[1], now)

    def diffuse(self, rep: int, chunk_id: int, now: float) -> None:
        raise NotImplementedError


class TreeDriver(_TurntableDriver):
    """Turntable sectors, each organized as a diffusion tree."""

    def __init__(self, settings: TurntableSettings, fanout: int = 3,
                 summary_mode: str = "exact", bloom_bits: int = 1024,
                 bloom_hashes: int = 3):
        super().__init__(settings)
        self.trees = [
            SectorTree(fanout=fanout, summary_mode=summary_mode,
                       bloom_bits=bloom_bits, bloom_hashes=bloom_hashes)
            for _ in range(settings.m)
        ]
        self.turntable.sector_router = self._route_in_sector
        self.pending_handoff: dict[tuple[int, int], int] = {}

    # -- membership -------------------------------------------------------

    def on_join(self, peer_id: int, lag: int, now: float) -> None:
        sector = self.turntable.join(peer_id)
        profile = self.engine.peers[peer_id].profile
        tree = self.trees[sector]
        tree.attach(peer_id, upload_capacity=profile.upload_capacity,
                    storage_capacity=profile.storage_capacity,
                    as_root=not tree.nodes)
        self._flush_retained(sector, now)

    def on_leave(self, peer_id: int, now: float, abrupt: bool) -> None:
        sector = self.turntable.leave(peer_id)
        if abrupt:
            # the tree still lists the peer; the audit sweep finds it
            return
        self._remove_from_tree(sector, peer_id, now)

    def _remove_from_tree(self, sector: int, peer_id: int, now: float) -> None:
        tree = self.trees[sector]
        if peer_id not in tree.nodes:
            return
        held = tree.unpin_all(peer_id)
        self.engine.peers[peer_id].pinned.clear()
        tree.update_summary(peer_id)
        tree.detach(peer_id)
        for chunk in sorted(held):
            if tree.replica_count(chunk) < self.settings.k_min:
                self._emergency(sector, chunk, now)

    def _emergency(self, sector: int, chunk: int, now: float) -> None:
        tree = self.trees[sector]
        self.emergency_rounds += 1
        result = tree.emergency_replicate(
            chunk, self.settings.k_rep,
            producer_archive=self.settings.producer_archive)
        eng = self.engine
        if result.permanent_loss:
            self.permanent_losses += 1
            return
        for pid in result.new_pins:
            eng.store_chunk(pid, chunk, pin=True)
        if result.new_pins:
            nbytes = eng.stream.chunk_size_bytes * len(result.new_pins)
            if result.fetched_from == PRODUCER:
                eng.counters["producer_upload_bytes"] += nbytes
            else:
                src = eng.peers.get(result.fetched_from)
                if src is not None:
                    src.served += len(result.new_pins)
            eng.counters["control_messages"] += len(result.new_pins)

    def on_audit(self, now: float) -> None:
        """Find abruptly departed members still wired into the trees."""
        for sector, tree in enumerate(self.trees):
            departed = [
                pid for pid in sorted(tree.nodes)
                if self.engine.peers[pid].state is PeerState.DEPARTED
            ]
            for pid in departed:
                self._remove_from_tree(sector, pid, now)

    # -- chunk flow ----------------------------------------------------------

    def diffuse(self, rep: int, chunk_id: int, now: float) -> None:
        sector = sector_of_chunk(chunk_id, self.settings.m)
        tree = self.trees[sector]
        result = tree.diffuse_chunk(chunk_id, self.settings.k_rep)
        for pid in result.pinned:
            self.engine.store_chunk(pid, chunk_id, pin=True)
        self.engine.counters["control_messages"] += len(result.pinned)

    def _route_in_sector(self, sector: int, entry: int, chunk_id: int) -> RouteOutcome:
        return self.trees[sector].route_request(entry, chunk_id)

    def find_provider(self, peer_id: int, chunk_id: int, now: float):
        shortcut = self.pending_handoff.pop((peer_id, chunk_id), None)
        if shortcut is not None and self.engine.has_chunk(shortcut, chunk_id):
            return (shortcut, 1)
        outcome = self.turntable.route_hookup(
            HookupRequest(requester=peer_id, target_chunk=chunk_id))
        if outcome.served_by is not None:
            server = self.engine.peers.get(outcome.served_by)
            if server is not None and server.state is not PeerState.DEPARTED:
                return (outcome.served_by, outcome.hops)
        if self.settings.producer_archive:
            return (PRODUCER, outcome.hops + 1)
        return (None, outcome.hops)

    def on_chunk_delivered(self, peer_id: int, chunk_id: int, src: int,
                           now: float) -> None:
        if src < 0:
            return
        peer = self.engine.peers[peer_id]
        prev = peer.last_server
        if prev is not None and prev >= 0 and prev != src:
            self.turntable.refresh_handoff_link(prev, src)
        candidate = self.turntable.offer_handoff(
            src, chunk_id + 1,
            stores=lambda p, c: self.engine.has_chunk(p, c))
        if candidate is not None:
            self.pending_handoff[(peer_id, chunk_id + 1)] = candidate
            self.engine.counters["control_messages"] += 1

    # -- reporting -----------------------------------------------------------------

    def replica_counts(self, now: float) -> dict[int, int]:
        counts: dict[int, int] = {}
        for chunk in range(self.engine.head_chunk + 1):
            counts[chunk] = self.trees[
                sector_of_chunk(chunk, self.settings.m)].replica_count(chunk)
        return counts

    def periodic_check(self, now: float) -> list[str]:
        problems = []
        for sector, tree in enumerate(self.trees):
            for msg in tree.check_invariants():
                problems.append(f"sector {sector}: {msg}")
        return problems

    def finalize(self, now: float) -> None:
        self.on_audit(now)

    def extra_metrics(self) -> dict[str, float]:
        return {
            "permanent_losses": self.permanent_losses,
            "emergency_rounds": self.emergency_rounds,
            "retained_republished": self.retained_republished,
            "stale_handoffs": self.turntable.stale_handoffs,
            "summary_overhead_bytes": sum(
                t.summary_traffic_bytes for t in self.trees),
        }


class MeshDriver(_TurntableDriver):
    """Turntable sectors, each organized as a colored gossip mesh."""

    def __init__(self, settings: TurntableSettings, seed: int | str,
                 colors: int = 3, gossip_period: float = 10.0,
                 max_degree: int = 8, request_ttl: int = 16):
        super().__init__(settings)
        self.request_ttl = request_ttl
        self.gossip_period = gossip_period
        scheme = ColorScheme(colors=colors, sector_count=settings.m)
        self.meshes = [
            SectorMesh(
                scheme,
                random.Random(f"mesh:{seed}:{sector}"),
                gossip_period=gossip_period,
                max_degree=max_degree,
                k_rep=settings.k_rep,
            )
            for sector in range(settings.m)
        ]
        self.turntable.sector_router = self._route_in_sector
        self._gossip_epoch: dict[int, int] = {}

    def on_join(self, peer_id: int, lag: int, now: float) -> None:
        sector = self.turntable.join(peer_id)
        profile = self.engine.peers[peer_id].profile
        self.meshes[sector].add_peer(peer_id, now,
                                     storage_capacity=profile.storage_capacity)
        epoch = self._gossip_epoch.get(peer_id, 0) + 1
        self._gossip_epoch[peer_id] = epoch
        self.engine.schedule_timer(now + self.gossip_period, peer_id,
                                   ("gossip", epoch))
        self._flush_retained(sector, now)

    def on_leave(self, peer_id: int, now: float, abrupt: bool) -> None:
        sector = self.turntable.leave(peer_id)
        mesh = self.meshes[sector]
        if peer_id in mesh.peers:
            # replicas die with the peer; gossip adoption re-fills them
            mesh.remove_peer(peer_id)
        self._gossip_epoch[peer_id] = self._gossip_epoch.get(peer_id, 0) + 1

    def on_timer(self, owner: int, tag: tuple, now: float) -> None:
        if tag[0] != "gossip":
            return
        if self._gossip_epoch.get(owner) != tag[1]:
            return
        peer = self.engine.peers.get(owner)
        if peer is None or peer.state is PeerState.DEPARTED:
            return
        sector = self.turntable.sector_of_peer.get(owner)
        if sector is None:
            return
        mesh = self.meshes[sector]
        report = mesh.gossip_round(owner, now)
        eng = self.engine
        if report.partner is not None:
            eng.counters["control_messages"] += 2
        for adopter, chunk in report.adopted:
            eng.counters["transfer_bytes"] += eng.stream.chunk_size_bytes
            eng.store_chunk(adopter, chunk, pin=True)
        eng.schedule_timer(now + self.gossip_period, owner, tag)

    def diffuse(self, rep: int, chunk_id: int, now: float) -> None:
        sector = sector_of_chunk(chunk_id, self.settings.m)
        mesh = self.meshes[sector]
        if rep not in mesh.peers:
            self.turntable.retain_for_sector(sector, chunk_id)
            return
        result = mesh.colored_diffuse(rep, chunk_id)
        for pid in result.pinned:
            self.engine.store_chunk(pid, chunk_id, pin=True)
        self.engine.counters["control_messages"] += max(1, len(result.pinned))

    def _route_in_sector(self, sector: int, entry: int, chunk_id: int) -> RouteOutcome:
        mesh = self.meshes[sector]
        if entry not in mesh.peers:
            return RouteOutcome(served_by=None, hops=0)
        return mesh.route_request(entry, chunk_id, ttl=self.request_ttl)

    def find_provider(self, peer_id: int, chunk_id: int, now: float):
        outcome = self.turntable.route_hookup(
            HookupRequest(requester=peer_id, target_chunk=chunk_id))
        if outcome.served_by is not None:
            server = self.engine.peers.get(outcome.served_by)
            if server is not None and server.state is not PeerState.DEPARTED:
                return (outcome.served_by, outcome.hops)
        if self.settings.producer_archive:
            return (PRODUCER, outcome.hops + 1)
        return (None, outcome.hops)

    def on_chunk_delivered(self, peer_id: int, chunk_id: int, src: int,
                           now: float) -> None:
        # gossip adoption keeps the mesh store in sync; nothing extra here
        pass

    def replica_counts(self, now: float) -> dict[int, int]:
        counts: dict[int, int] = {}
        for chunk in range(self.engine.head_chunk + 1):
            counts[chunk] = self.meshes[
                sector_of_chunk(chunk, self.settings.m)].replica_count(chunk)
        return counts

    def periodic_check(self, now: float) -> list[str]:
        problems = []
        for sector, mesh in enumerate(self.meshes):
            for msg in mesh.check_invariants(now):
                problems.append(f"sector {sector}: {msg}")
        return problems

    def finalize(self, now: float) -> None:
        if not self.settings.producer_archive:
            for chunk in range(self.engine.head_chunk + 1):
                sector = sector_of_chunk(chunk, self.settings.m)
                if self.meshes[sector].replica_count(chunk) == 0:
                    self.permanent_losses += 1

    def extra_metrics(self) -> dict[str, float]:
        return {
            "permanent_losses": self.permanent_losses,
            "retained_republished": self.retained_republished,
            "coloring_gaps": sum(m.coloring_gaps for m in self.meshes),
            "recolor_events": sum(m.recolor_events for m in self.meshes),
            "route_detours": sum(m.route_detours for m in self.meshes),
            "stale_view_evictions": sum(m.stale_evictions for m in self.meshes),
            "domination_violations": sum(
                m.domination_report()[0] for m in self.meshes),
        }


class IntervalDriver(OverlayDriver):
    """Lag-interval overlay: viewers themselves are the archive.

    Every participating viewer maintains a buffer covering a closed lag
    range around its playback position. Joins, leaves, and moves are
    patched locally; a periodic rebalance re-runs the global sweep and
    adopts its assignment when feasible. Requests are served by any
    member whose range covers the wanted lag, preferring the least
    loaded, with the producer as optional fallback.
    """

    def __init__(self, k: int = 2, domain: int = 600, default_cap: int = 4,
                 rebalance_period: float = 600.0, dedicated_server: bool = False,
                 producer_archive: bool = True):
        self.constraints = OverlayConstraints(k=k, T=domain,
                                              default_cap=default_cap)
        self.graph = IntervalGraph(T=domain)
        self.rebalance_period = rebalance_period
        self.dedicated_server = dedicated_server
        self.producer_archive = producer_archive
        self.coverage_samples = 0
        self.coverage_incidents = 0
        self.repair_incidents = 0
        self.interval_changes = 0
        self.requests_by_lag: dict[int, int] = {}
        # (l, r) spans captured at each rebalance; sessions all end by the
        # horizon, so length statistics must come from mid-run state
        self.buffer_snapshots: list[list[tuple[int, int]]] = []

    def bind(self, engine) -> None:
        super().bind(engine)
        if self.dedicated_server:
            self.constraints.caps[DEDICATED] = float("inf")
            self.graph.add(Interval(DEDICATED, 0, 0, self.constraints.T))
        engine.schedule_timer(engine.stream.start_time + self.rebalance_period,
                              PRODUCER, ("rebalance",))

    # -- membership ----------------------------------------------------------

    def _member_lag(self, lag: int) -> int:
        return max(0, min(lag, self.constraints.T))

    def on_join(self, peer_id: int, lag: int, now: float) -> None:
        profile = self.engine.peers[peer_id].profile
        self.constraints.caps[peer_id] = profile.upload_capacity
        outcome = repair_on_event(
            self.graph, self.constraints,
            OverlayEvent(kind="join", peer_id=peer_id,
                         lag=self._member_lag(lag)))
        self._account(outcome)

    def on_leave(self, peer_id: int, now: float, abrupt: bool) -> None:
        if peer_id not in self.graph.vertices:
            return
        if abrupt:
            # nobody is notified; the hole stays until the next rebalance
            self.graph.remove(peer_id)
            self.constraints.caps.pop(peer_id, None)
            return
        outcome = repair_on_event(self.graph, self.constraints,
                                  OverlayEvent(kind="leave", peer_id=peer_id))
        self.constraints.caps.pop(peer_id, None)
        self._account(outcome)

    def on_move(self, peer_id: int, old_lag: int, new_lag: int, now: float) -> None:
        if peer_id not in self.graph.vertices:
            return
        outcome = repair_on_event(
            self.graph, self.constraints,
            OverlayEvent(kind="move", peer_id=peer_id,
                         lag=self._member_lag(new_lag)))
        self._account(outcome)

    def _account(self, outcome) -> None:
        self.interval_changes += len(outcome.changed)
        self.engine.counters["control_messages"] += max(1, len(outcome.changed))
        if outcome.incidents:
            self.repair_incidents += len(outcome.incidents)

    # -- serving -----------------------------------------------------------------

    def has_local(self, peer_id: int, chunk_id: int, now: float) -> bool:
        return self.engine.has_chunk(peer_id, chunk_id)

    def find_provider(self, peer_id: int, chunk_id: int, now: float):
        lag = self.engine.head_chunk - chunk_id
        if lag < 0:
            return (None, 0)
        self.requests_by_lag[lag] = self.requests_by_lag.get(lag, 0) + 1
        if lag > self.constraints.T:
            return ((PRODUCER, 1) if self.producer_archive else (None, 0))
        eligible = [
            iv.peer_id for iv in self.graph.intervals()
            if iv.peer_id != peer_id and iv.l <= lag <= iv.r
        ]
        live = []
        for pid in eligible:
            if pid == DEDICATED:
                live.append(pid)
                continue
            peer = self.engine.peers.get(pid)
            if peer is not None and peer.state is not PeerState.DEPARTED:
                live.append(pid)
        if not live:
            if self.producer_archive:
                return (PRODUCER, 1)
            return (None, 0)
        loads = self.engine._active_uploads
        best = min(live, key=lambda pid: (loads.get(pid, 0), pid))
        return (best, 1)

    # -- maintenance ----------------------------------------------------------------

    def on_timer(self, owner: int, tag: tuple, now: float) -> None:
        if tag[0] != "rebalance":
            return
        self._drop_departed()
        outcome = rebalance(self.graph, self.constraints)
        self._account(outcome)
        self._sample_coverage()
        self.buffer_snapshots.append([
            (iv.l, iv.r) for iv in self.graph.intervals()
            if iv.peer_id != DEDICATED
        ])
        self.engine.schedule_timer(now + self.rebalance_period, PRODUCER, tag)

    def _drop_departed(self) -> None:
        for pid in sorted(self.graph.vertices):
            if pid == DEDICATED:
                continue
            peer = self.engine.peers.get(pid)
            if peer is None or peer.state is PeerState.DEPARTED:
                self.graph.remove(pid)
                self.constraints.caps.pop(pid, None)

    def _sample_coverage(self) -> None:
        self.coverage_samples += 1
        gaps = coverage_gaps_fast(self.graph, self.constraints.k,
                                  self.constraints.T)
        if gaps:
            self.coverage_incidents += 1

    # -- reporting ---------------------------------------------------------------------

    def replica_counts(self, now: float) -> dict[int, int]:
        diff = [0] * (self.constraints.T + 2)
        for iv in self.graph.intervals():
            lo = max(0, iv.l)
            hi = min(self.constraints.T, iv.r)
            if lo > hi:
                continue
            diff[lo] += 1
            diff[hi + 1] -= 1
        cover = []
        running = 0
        for t in range(self.constraints.T + 1):
            running += diff[t]
            cover.append(running)
        counts = {}
        for chunk in range(self.engine.head_chunk + 1):
            lag = self.engine.head_chunk - chunk
            counts[chunk] = cover[lag] if lag <= self.constraints.T else 0
        return counts

    def periodic_check(self, now: float) -> list[str]:
        problems = []
        for iv in self.graph.intervals():
            if not (0 <= iv.l <= iv.c <= iv.r):
                problems.append(f"malformed interval for peer {iv.peer_id}")
        return problems

    def finalize(self, now: float) -> None:
        self._drop_departed()
        self._sample_coverage()

    def buffer_length_by_decile(self) -> tuple[float, float] | None:
        """Mean buffer length in the most- vs least-requested lag decile.

        Lengths are drawn from the rebalance-time snapshots, because by
        the time a report is collected every session has ended and the
        live graph is empty.
        """
        if not self.requests_by_lag:
            return None
        T = self.constraints.T
        totals = [0] * (T + 1)
        for lag, n in self.requests_by_lag.items():
            if 0 <= lag <= T:
                totals[lag] += n
        order = sorted(range(T + 1), key=lambda lag: (-totals[lag], lag))
        decile = max(1, (T + 1) // 10)
        hot = set(order[:decile])
        cold = set(order[-decile:])

        def mean_len(lags: set[int]) -> float:
            lengths = []
            for snapshot in self.buffer_snapshots:
                for l, r in snapshot:
                    if any(l <= lag <= r for lag in lags):
                        lengths.append(r - l)
            return sum(lengths) / len(lengths) if lengths else 0.0

        return mean_len(hot), mean_len(cold)

    def extra_metrics(self) -> dict[str, float]:
        frac = (self.coverage_incidents / self.coverage_samples
                if self.coverage_samples else 0.0)
        return {
            "coverage_incident_fraction": frac,
            "repair_incidents": self.repair_incidents,
            "interval_changes": self.interval_changes,
            "members_final": sum(
                1 for pid in self.graph.vertices if pid != DEDICATED),
        }
