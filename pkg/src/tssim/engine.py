"""Deterministic discrete-event core shared by all three overlays.

The engine owns the clock, the event queue, peer lifecycle, and a
simplified transport: fixed per-hop latency, per-peer upload slots with
FIFO queueing, and silent drops to departed peers. Overlay logic lives
in driver objects; the engine asks a driver where a chunk can be found
and handles the transfer bookkeeping itself.

Viewers are tracked in lag space. A playing viewer keeps a constant
lag, so its position advances with the stream head; a paused viewer
freezes its position and takes the lag increase on resume. Every
chunk_duration a live viewer ticks: it plays what it has, or asks the
overlay for the chunk at its position. A chunk that cannot be found is
skipped at the next tick rather than retried forever, which models a
player abandoning a lost segment and keeps every run bounded.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from tssim.stream import (
    StreamParams,
    chunk_duration,
    head_chunk_at,
    pause_lag_increase,
)
from tssim.workload import PeerProfile, SessionEvent, SessionEventKind

PRODUCER = -1
DEDICATED = -2  # optional always-on server peer (interval overlay)


class InvariantViolation(Exception):
    """Raised in checked mode when a structural invariant breaks."""


@dataclass(frozen=True)
class ProduceChunk:
    chunk_id: int


@dataclass(frozen=True)
class MessageDelivery:
    src: int
    dst: int
    message: tuple


@dataclass(frozen=True)
class TimerFire:
    owner: int
    tag: tuple


@dataclass(frozen=True)
class SimEvent:
    time: float
    sequence: int
    payload: object

    def sort_key(self):
        return (self.time, self.sequence)


@dataclass(frozen=True)
class NetworkModel:
    hop_latency: float = 0.05
    upload_kbps: float = 2000.0
    upload_slots: int = 4

    def __post_init__(self):
        if self.hop_latency < 0:
            raise ValueError(f"latency cannot be negative, got {self.hop_latency}")
        if self.upload_kbps <= 0:
            raise ValueError(f"upload_kbps must be positive, got {self.upload_kbps}")
        if self.upload_slots < 1:
            raise ValueError(f"need at least one upload slot, got {self.upload_slots}")

    def chunk_transfer_time(self, chunk_bytes: int) -> float:
        """Seconds to push one chunk through one slot's bandwidth share."""
        share_bps = self.upload_kbps * 1000 / self.upload_slots
        return chunk_bytes * 8 / share_bps


class PeerState(Enum):
    LIVE = "live"
    HOOKUP = "hookup"
    PAUSED = "paused"
    DEPARTED = "departed"


@dataclass
class PeerRuntime:
    profile: PeerProfile
    state: PeerState
    lag: int  # chunks behind the head; 0 = live edge
    joined_at: float
    store: dict[int, int] = field(default_factory=dict)  # chunk -> use stamp
    pinned: set[int] = field(default_factory=set)
    tick_epoch: int = 0
    first_delivery: float | None = None
    served: int = 0
    last_server: int | None = None


class Engine:
    """Event loop plus transport. One instance = one run = one thread."""

    def __init__(
        self,
        stream: StreamParams,
        network: NetworkModel,
        horizon: float,
        driver,
        check_invariants: bool = False,
        audit_period: float = 300.0,
        sample_period: float = 600.0,
    ):
        if horizon < 0:
            raise ValueError(f"horizon cannot be negative, got {horizon}")
        self.stream = stream
        self.network = network
        self.horizon = horizon
        self.driver = driver
        self.checked = check_invariants
        self.audit_period = audit_period
        self.sample_period = sample_period

        self.now = stream.start_time
        self.head_chunk = -1
        self._heap: list[tuple[float, int, SimEvent]] = []
        self._seq = 0
        self.peers: dict[int, PeerRuntime] = {}

        self._active_uploads: dict[int, int] = {}
        self._upload_queue: dict[int, deque] = {}
        self._profiles: dict[int, PeerProfile] = {}

        self.counters = {
            "chunks_produced": 0,
            "chunks_requested": 0,
            "chunks_delivered": 0,
            "chunks_missed": 0,
            "chunks_served_local": 0,
            "live_chunks": 0,
            "control_messages": 0,
            "dropped_messages": 0,
            "producer_upload_bytes": 0,
            "transfer_bytes": 0,
        }
        self.hops_histogram: dict[int, int] = {}
        self.startup_delays: list[float] = []
        self.replica_rows: list[tuple[float, int, int]] = []

        driver.bind(self)

    # -- scheduling -----------------------------------------------------------

    def schedule(self, time: float, payload) -> None:
        event = SimEvent(time=time, sequence=self._seq, payload=payload)
        self._seq += 1
        heapq.heappush(self._heap, (event.time, event.sequence, event))

    def schedule_timer(self, time: float, owner: int, tag: tuple) -> None:
        self.schedule(time, TimerFire(owner=owner, tag=tag))

    # -- transport --------------------------------------------------------------

    def _slots_of(self, peer_id: int) -> int:
        peer = self.peers.get(peer_id)
        if peer is None:
            return self.network.upload_slots
        return max(1, peer.profile.upload_capacity)

    def send_control(self, src: int, dst: int, message: tuple, hops: int = 1) -> None:
        self.counters["control_messages"] += max(1, hops)
        delay = self.network.hop_latency * max(1, hops)
        self.schedule(self.now + delay, MessageDelivery(src, dst, message))

    def send_chunk(self, src: int, dst: int, chunk_id: int, hops: int) -> None:
        """Move one chunk, consuming an upload slot of `src` for its duration."""
        if src == PRODUCER or src == DEDICATED:
            self.counters["producer_upload_bytes"] += self.stream.chunk_size_bytes
            self._deliver_chunk(src, dst, chunk_id, hops)
            return
        peer = self.peers.get(src)
        if peer is None or peer.state is PeerState.DEPARTED:
            self.counters["dropped_messages"] += 1
            return
        active = self._active_uploads.get(src, 0)
        if active < self._slots_of(src):
            self._start_transfer(src, dst, chunk_id, hops)
        else:
            self._upload_queue.setdefault(src, deque()).append((dst, chunk_id, hops))

    def _start_transfer(self, src: int, dst: int, chunk_id: int, hops: int) -> None:
        self._active_uploads[src] = self._active_uploads.get(src, 0) + 1
        if self._active_uploads[src] > self._slots_of(src):
            raise InvariantViolation(f"peer {src} exceeded its upload slots")
        self.peers[src].served += 1
        self._deliver_chunk(src, dst, chunk_id, hops)
        transfer = self.network.chunk_transfer_time(self.stream.chunk_size_bytes)
        self.schedule_timer(self.now + transfer, src, ("slot_free",))

    def _deliver_chunk(self, src: int, dst: int, chunk_id: int, hops: int) -> None:
        self.counters["transfer_bytes"] += self.stream.chunk_size_bytes
        transfer = self.network.chunk_transfer_time(self.stream.chunk_size_bytes)
        delay = transfer + self.network.hop_latency * max(1, hops)
        self.schedule(self.now + delay,
                      MessageDelivery(src, dst, ("chunk", chunk_id, src)))

    def _on_slot_free(self, src: int) -> None:
        self._active_uploads[src] = max(0, self._active_uploads.get(src, 0) - 1)
        queue = self._upload_queue.get(src)
        while queue:
            dst, chunk_id, hops = queue.popleft()
            target = self.peers.get(dst)
            if target is None or target.state is PeerState.DEPARTED:
                self.counters["dropped_messages"] += 1
                continue
            self._start_transfer(src, dst, chunk_id, hops)
            break

    # -- stores ---------------------------------------------------------------------

    def store_chunk(self, peer_id: int, chunk_id: int, pin: bool = False) -> bool:
        """LRU insert; pinned chunks are never evicted. False = no room."""
        peer = self.peers[peer_id]
        if pin:
            peer.pinned.add(chunk_id)
        if chunk_id in peer.store:
            peer.store[chunk_id] = self._seq
            return True
        while len(peer.store) >= peer.profile.storage_capacity:
            evictable = [c for c in peer.store if c not in peer.pinned]
            if not evictable:
                if pin:
                    peer.pinned.discard(chunk_id)
                return False
            victim = min(evictable, key=lambda c: (peer.store[c], c))
            del peer.store[victim]
        peer.store[chunk_id] = self._seq
        return True

    def has_chunk(self, peer_id: int, chunk_id: int) -> bool:
        peer = self.peers.get(peer_id)
        return peer is not None and chunk_id in peer.store

    # -- viewer lifecycle -------------------------------------------------------------

    def _on_session_event(self, evt: SessionEvent) -> None:
        kind = evt.kind
        if kind is SessionEventKind.JOIN:
            self._on_join(evt)
            return
        peer = self.peers.get(evt.peer_id)
        if peer is None or peer.state is PeerState.DEPARTED:
            return
        if kind is SessionEventKind.LEAVE:
            peer.state = PeerState.DEPARTED
            peer.tick_epoch += 1
            self.driver.on_leave(evt.peer_id, self.now, evt.abrupt)
        elif kind is SessionEventKind.PAUSE:
            if peer.state is PeerState.PAUSED:
                return
            peer.state = PeerState.PAUSED
            peer.tick_epoch += 1
            duration = evt.duration or 0.0
            self.schedule_timer(self.now + duration, evt.peer_id,
                                ("resume", peer.tick_epoch, duration))
        elif kind in (SessionEventKind.SEEK_FORWARD, SessionEventKind.SEEK_BACKWARD):
            assert evt.target is not None
            target = max(0, min(evt.target, self.head_chunk))
            old_lag = peer.lag
            peer.lag = self.head_chunk - target
            if peer.lag != old_lag:
                self.driver.on_move(evt.peer_id, old_lag, peer.lag, self.now)

    def _on_join(self, evt: SessionEvent) -> None:
        profile = self._profiles[evt.peer_id]
        position = min(evt.position or 0, max(0, self.head_chunk))
        lag = max(0, self.head_chunk - position)
        state = PeerState.LIVE if lag == 0 else PeerState.HOOKUP
        self.peers[evt.peer_id] = PeerRuntime(
            profile=profile, state=state, lag=lag, joined_at=self.now,
        )
        self.driver.on_join(evt.peer_id, lag, self.now)
        self.schedule_timer(self.now, evt.peer_id, ("tick", 0))

    def _on_resume(self, peer_id: int, epoch: int, duration: float) -> None:
        peer = self.peers.get(peer_id)
        if peer is None or peer.state is not PeerState.PAUSED:
            return
        if peer.tick_epoch != epoch:
            return
        old_lag = peer.lag
        peer.lag += pause_lag_increase(self.stream, duration)
        peer.lag = min(peer.lag, max(0, self.head_chunk))
        peer.state = PeerState.HOOKUP if peer.lag > 0 else PeerState.LIVE
        if peer.lag != old_lag:
            self.driver.on_move(peer_id, old_lag, peer.lag, self.now)
        self.schedule_timer(self.now, peer_id, ("tick", peer.tick_epoch))

    def _viewer_tick(self, peer_id: int, epoch: int) -> None:
        peer = self.peers.get(peer_id)
        if peer is None or peer.tick_epoch != epoch:
            return
        if peer.state in (PeerState.DEPARTED, PeerState.PAUSED):
            return
        position = self.head_chunk - peer.lag
        if self.head_chunk >= 0 and position >= 0:
            self._consume(peer_id, peer, position)
        self.schedule_timer(self.now + chunk_duration(self.stream),
                            peer_id, ("tick", epoch))

    def _consume(self, peer_id: int, peer: PeerRuntime, position: int) -> None:
        if peer.lag == 0:
            # live edge: fed by the producer's live broadcast, not the archive
            self.counters["live_chunks"] += 1
            self.store_chunk(peer_id, position)
            if peer.first_delivery is None:
                peer.first_delivery = self.now
                self.startup_delays.append(0.0)
            return
        if self.driver.has_local(peer_id, position, self.now):
            self.counters["chunks_served_local"] += 1
            if position in peer.store:
                peer.store[position] = self._seq
            if peer.first_delivery is None:
                peer.first_delivery = self.now
                self.startup_delays.append(0.0)
            return
        self.counters["chunks_requested"] += 1
        outcome = self.driver.find_provider(peer_id, position, self.now)
        if outcome is None or outcome[0] is None:
            hops = 0 if outcome is None else outcome[1]
            self.counters["control_messages"] += hops
            self.counters["chunks_missed"] += 1
            return
        server, hops = outcome
        self.counters["control_messages"] += max(1, hops)
        self.hops_histogram[hops] = self.hops_histogram.get(hops, 0) + 1
        if server == peer_id:
            self.counters["chunks_served_local"] += 1
            self.counters["chunks_delivered"] += 1
            return
        self.send_chunk(server, peer_id, position, hops)

    def _on_chunk_arrival(self, src: int, dst: int, chunk_id: int) -> None:
        peer = self.peers.get(dst)
        if peer is None or peer.state is PeerState.DEPARTED:
            self.counters["dropped_messages"] += 1
            return
        self.counters["chunks_delivered"] += 1
        self.store_chunk(dst, chunk_id)
        if peer.first_delivery is None:
            peer.first_delivery = self.now
            self.startup_delays.append(self.now - peer.joined_at)
        # updated after the callback so the driver can still read the
        # previous server (consecutive-chunk handoffs depend on it)
        self.driver.on_chunk_delivered(dst, chunk_id, src, self.now)
        peer.last_server = src

    # -- main loop ------------------------------------------------------------------------

    def run(self, sessions: list[SessionEvent],
            profiles: dict[int, PeerProfile]) -> None:
        """Process every event up to the horizon, in (time, seq) order."""
        self._profiles = profiles
        end = self.stream.start_time + self.horizon
        d = chunk_duration(self.stream)

        chunk_id = 0
        while self.stream.start_time + (chunk_id + 1) * d <= end:
            self.schedule(self.stream.start_time + (chunk_id + 1) * d,
                          ProduceChunk(chunk_id))
            chunk_id += 1
        for evt in sessions:
            if evt.time <= end:
                self.schedule(evt.time, evt)
        if self.horizon > 0:
            self.schedule_timer(self.stream.start_time + self.sample_period,
                                PRODUCER, ("sample",))
            self.schedule_timer(self.stream.start_time + self.audit_period,
                                PRODUCER, ("audit",))

        while self._heap:
            time, _, event = heapq.heappop(self._heap)
            if time > end:
                break
            self.now = time
            self._dispatch(event.payload)

        self.now = end
        self.driver.finalize(self.now)
        if self.checked:
            self._run_checks()

    def _dispatch(self, payload) -> None:
        if isinstance(payload, ProduceChunk):
            self.head_chunk = payload.chunk_id
            self.counters["chunks_produced"] += 1
            self.driver.on_produce(payload.chunk_id, self.now)
        elif isinstance(payload, SessionEvent):
            self._on_session_event(payload)
        elif isinstance(payload, TimerFire):
            tag = payload.tag
            if tag[0] == "tick":
                self._viewer_tick(payload.owner, tag[1])
            elif tag[0] == "resume":
                self._on_resume(payload.owner, tag[1], tag[2])
            elif tag[0] == "slot_free":
                self._on_slot_free(payload.owner)
            elif tag[0] == "sample":
                self._take_sample()
                self.schedule_timer(self.now + self.sample_period,
                                    PRODUCER, ("sample",))
            elif tag[0] == "audit":
                self.driver.on_audit(self.now)
                if self.checked:
                    self._run_checks()
                self.schedule_timer(self.now + self.audit_period,
                                    PRODUCER, ("audit",))
            else:
                self.driver.on_timer(payload.owner, tag, self.now)
        elif isinstance(payload, MessageDelivery):
            msg = payload.message
            if msg[0] == "chunk":
                self._on_chunk_arrival(msg[2], payload.dst, msg[1])
            else:
                self.driver.on_message(payload.src, payload.dst, msg, self.now)

    def _take_sample(self) -> None:
        counts = self.driver.replica_counts(self.now)
        for chunk_id in sorted(counts):
            self.replica_rows.append((self.now, chunk_id, counts[chunk_id]))

    def _run_checks(self) -> None:
        problems = self.driver.periodic_check(self.now)
        for pid, peer in sorted(self.peers.items()):
            if len(peer.store) > peer.profile.storage_capacity:
                problems.append(f"peer {pid} store exceeds capacity")
        for pid, active in sorted(self._active_uploads.items()):
            if active > self._slots_of(pid):
                problems.append(f"peer {pid} exceeds upload slots")
        if problems:
            raise InvariantViolation("; ".join(problems))

    # -- derived views ----------------------------------------------------------------------

    def alive_peers(self) -> list[int]:
        return sorted(pid for pid, p in self.peers.items()
                      if p.state is not PeerState.DEPARTED)

    def availability_ratio(self) -> float:
        requested = self.counters["chunks_requested"]
        if requested == 0:
            return 0.0
        return self.counters["chunks_delivered"] / requested


class OverlayDriver:
    """Base driver: no overlay, every request misses. Drivers override."""

    def bind(self, engine: Engine) -> None:
        self.engine = engine

    def on_join(self, peer_id: int, lag: int, now: float) -> None:
        pass

    def on_leave(self, peer_id: int, now: float, abrupt: bool) -> None:
        pass

    def on_move(self, peer_id: int, old_lag: int, new_lag: int, now: float) -> None:
        pass

    def on_produce(self, chunk_id: int, now: float) -> None:
        pass

    def on_chunk_delivered(self, peer_id: int, chunk_id: int, src: int,
                           now: float) -> None:
        pass

    def on_message(self, src: int, dst: int, message: tuple, now: float) -> None:
        pass

    def on_timer(self, owner: int, tag: tuple, now: float) -> None:
        pass

    def on_audit(self, now: float) -> None:
        pass

    def has_local(self, peer_id: int, chunk_id: int, now: float) -> bool:
        return self.engine.has_chunk(peer_id, chunk_id)

    def find_provider(self, peer_id: int, chunk_id: int, now: float):
        return None

    def replica_counts(self, now: float) -> dict[int, int]:
        return {}

    def periodic_check(self, now: float) -> list[str]:
        return []

    def finalize(self, now: float) -> None:
        pass

    def extra_metrics(self) -> dict[str, float]:
        return {}


def produced_chunks_within(stream: StreamParams, horizon: float) -> int:
    """How many chunks complete during [start, start + horizon]."""
    if horizon <= 0:
        return 0
    return max(0, head_chunk_at(stream, stream.start_time + horizon) + 1)
