"""Synthetic viewer population: joins, leaves, pauses, and seeks.

No public measurement study of time-shifted viewing exists, so every
distribution here is a parameterized conjecture built from three
qualitative ingredients: show popularity decays like a Zipf law over
recency rank, a large share of viewers quits early into a show, and
leave probability spikes when playback crosses a show boundary. All
sampling is seeded and the generator is a pure function of its inputs.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

from tssim.stream import (
    StreamTimeline,
    chunk_duration,
    head_chunk_at,
)


class SessionEventKind(Enum):
    JOIN = "join"
    LEAVE = "leave"
    PAUSE = "pause"
    SEEK_FORWARD = "seek_forward"
    SEEK_BACKWARD = "seek_backward"


VCR_KINDS = (
    SessionEventKind.PAUSE,
    SessionEventKind.SEEK_FORWARD,
    SessionEventKind.SEEK_BACKWARD,
)


@dataclass(frozen=True)
class SessionEvent:
    """One step of a viewer's session.

    `position` is set on JOIN (starting chunk), `duration` on PAUSE
    (seconds), `target` on seeks (destination chunk). `abrupt` marks a
    LEAVE that happens without notice, i.e. a crash or a closed laptop
    rather than a polite disconnect.
    """

    time: float
    peer_id: int
    kind: SessionEventKind
    position: int | None = None
    duration: float | None = None
    target: int | None = None
    abrupt: bool = False


@dataclass(frozen=True)
class PeerProfile:
    peer_id: int
    upload_capacity: int  # max concurrent downstream peers served
    storage_capacity: int  # max chunks stored
    join_time: float

    def __post_init__(self) -> None:
        if self.upload_capacity < 0:
            raise ValueError(f"peer {self.peer_id}: negative upload capacity")
        if self.storage_capacity < 1:
            raise ValueError(f"peer {self.peer_id}: storage must hold a chunk")


@dataclass(frozen=True)
class BehaviorParams:
    zipf_exponent: float = 1.0
    early_quit_fraction: float = 0.5
    early_quit_window: float = 600.0  # seconds
    show_end_leave_prob: float = 0.8
    vcr_rate: float = 1 / 900  # VCR events per second per viewer
    arrival_rate: float = 0.05  # peers per second
    live_join_prob: float = 0.5
    pause_mean_seconds: float = 120.0
    show_start_burst: float = 3.0  # expected extra joins when a show starts airing
    abrupt_leave_prob: float = 0.2
    popularity_session_corr: float = 0.0  # >0 shortens sessions on popular shows

    def __post_init__(self) -> None:
        for name in (
            "early_quit_fraction",
            "show_end_leave_prob",
            "live_join_prob",
            "abrupt_leave_prob",
        ):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be a probability, got {v}")
        for name in ("vcr_rate", "arrival_rate", "early_quit_window",
                     "pause_mean_seconds", "show_start_burst"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.zipf_exponent <= 0:
            raise ValueError(f"zipf_exponent must be positive, got {self.zipf_exponent}")


@lru_cache(maxsize=256)
def _zipf_norm(exponent: float, catalog_size: int) -> float:
    return sum(i ** -exponent for i in range(1, catalog_size + 1))


def zipf_popularity(rank: int, exponent: float, catalog_size: int) -> float:
    """Probability mass of the item at `rank` (1 = most popular)."""
    if catalog_size < 1:
        raise ValueError(f"catalog_size must be at least 1, got {catalog_size}")
    if not 1 <= rank <= catalog_size:
        raise ValueError(f"rank {rank} outside [1, {catalog_size}]")
    if exponent <= 0:
        raise ValueError(f"exponent must be positive, got {exponent}")
    return rank ** -exponent / _zipf_norm(exponent, catalog_size)


def apply_vcr(event: SessionEvent, current_position: int, head: int) -> int:
    """New playing position after a VCR event.

    A pause never moves the position chunk; the lag grows because the
    head keeps advancing. Seeks land on the target, clamped to what has
    been recorded so far.
    """
    if current_position > head:
        raise ValueError(f"position {current_position} ahead of head {head}")
    if event.kind is SessionEventKind.PAUSE:
        return current_position
    if event.kind in (SessionEventKind.SEEK_FORWARD, SessionEventKind.SEEK_BACKWARD):
        assert event.target is not None
        return max(0, min(event.target, head))
    raise ValueError(f"{event.kind} is not a VCR event")


def _poisson(rng: random.Random, lam: float) -> int:
    if lam <= 0:
        return 0
    threshold = math.exp(-lam)
    k, p = 0, 1.0
    while True:
        p *= rng.random()
        if p <= threshold:
            return k
        k += 1


def _choose_join_position(
    rng: random.Random,
    behavior: BehaviorParams,
    timeline: StreamTimeline,
    head: int,
) -> int:
    if rng.random() < behavior.live_join_prob:
        return head
    catalog = timeline.shows_started_by(head)
    if not catalog:
        return head
    size = len(catalog)
    # Recency ranks: the most recently started show gets rank 1.
    weights = [zipf_popularity(size - i, behavior.zipf_exponent, size)
               for i in range(size)]
    show = rng.choices(catalog, weights=weights)[0]
    return min(show.first_chunk, head)


def _session_events(
    rng: random.Random,
    behavior: BehaviorParams,
    timeline: StreamTimeline,
    horizon: float,
    peer_id: int,
    join_time: float,
    forced_position: int | None,
) -> list[SessionEvent]:
    params = timeline.params
    d = chunk_duration(params)
    head0 = head_chunk_at(params, join_time)
    if forced_position is not None:
        pos = min(forced_position, head0)
    else:
        pos = _choose_join_position(rng, behavior, timeline, head0)
    events = [SessionEvent(time=join_time, peer_id=peer_id,
                           kind=SessionEventKind.JOIN, position=pos)]
    abrupt = rng.random() < behavior.abrupt_leave_prob

    quit_prob = behavior.early_quit_fraction
    if behavior.popularity_session_corr > 0:
        catalog = timeline.shows_started_by(head0)
        if catalog:
            size = len(catalog)
            show = timeline.show_of_chunk(pos)
            rank = size - catalog.index(show) if show in catalog else size
            mean_w = 1 / size
            w = zipf_popularity(max(1, min(rank, size)), behavior.zipf_exponent, size)
            quit_prob = min(1.0, quit_prob * (w / mean_w) ** behavior.popularity_session_corr)

    if rng.random() < quit_prob:
        leave = min(join_time + rng.uniform(0, behavior.early_quit_window), horizon)
        events.append(SessionEvent(time=leave, peer_id=peer_id,
                                   kind=SessionEventKind.LEAVE, abrupt=abrupt))
        return events

    last_tiled = timeline.shows[-1].last_chunk
    t = join_time
    show = timeline.show_of_chunk(pos)
    while True:
        t_vcr = t + rng.expovariate(behavior.vcr_rate) if behavior.vcr_rate > 0 else math.inf
        boundary_chunk = show.last_chunk + 1
        t_boundary = t + (boundary_chunk - pos) * d if boundary_chunk <= last_tiled else math.inf
        t_next = min(t_vcr, t_boundary, horizon)
        if t_next >= horizon:
            events.append(SessionEvent(time=horizon, peer_id=peer_id,
                                       kind=SessionEventKind.LEAVE, abrupt=False))
            return events
        if t_boundary <= t_vcr:
            if rng.random() < behavior.show_end_leave_prob:
                events.append(SessionEvent(time=t_boundary, peer_id=peer_id,
                                           kind=SessionEventKind.LEAVE, abrupt=abrupt))
                return events
            pos = boundary_chunk
            show = timeline.show_of_chunk(pos)
            t = t_boundary
            continue
        # VCR event; position advanced by playback since t.
        pos = pos + math.floor((t_vcr - t) / d)
        kind = rng.choices(VCR_KINDS, weights=(0.5, 0.25, 0.25))[0]
        if kind is SessionEventKind.PAUSE:
            dur = min(rng.expovariate(1 / behavior.pause_mean_seconds), horizon - t_vcr)
            if dur > 0:
                events.append(SessionEvent(time=t_vcr, peer_id=peer_id,
                                           kind=kind, duration=dur))
                t = t_vcr + dur
            else:
                t = t_vcr
        elif kind is SessionEventKind.SEEK_BACKWARD and pos > 0:
            target = rng.randrange(0, pos)
            events.append(SessionEvent(time=t_vcr, peer_id=peer_id,
                                       kind=kind, target=target))
            pos = target
            t = t_vcr
        elif kind is SessionEventKind.SEEK_FORWARD:
            head_now = head_chunk_at(params, t_vcr)
            if head_now > pos:
                target = rng.randrange(pos + 1, head_now + 1)
                events.append(SessionEvent(time=t_vcr, peer_id=peer_id,
                                           kind=kind, target=target))
                pos = target
            t = t_vcr
        else:
            t = t_vcr
        show = timeline.show_of_chunk(pos)


def generate_sessions(
    behavior: BehaviorParams,
    timeline: StreamTimeline,
    horizon: float,
    seed: int | str,
) -> list[SessionEvent]:
    """Full event stream for a seeded population over [start, horizon].

    Arrivals are Poisson at `arrival_rate`, with an extra burst of joins
    whenever a show starts airing. Every session begins with JOIN and
    ends with LEAVE (at the horizon if nothing ended it earlier); the
    position trajectory never passes the head. Identical arguments give
    an identical event list.
    """
    params = timeline.params
    if horizon <= params.start_time:
        raise ValueError(f"horizon {horizon} not after stream start {params.start_time}")
    if not timeline.shows:
        raise ValueError("timeline has no shows")
    if timeline.shows[-1].last_chunk < head_chunk_at(params, horizon):
        raise ValueError("timeline does not tile the whole horizon")

    d = chunk_duration(params)
    first_playable = params.start_time + d
    arrival_rng = random.Random(f"arrivals:{seed}")
    arrivals: list[tuple[float, int | None]] = []
    if behavior.arrival_rate > 0:
        t = first_playable
        while True:
            t += arrival_rng.expovariate(behavior.arrival_rate)
            if t >= horizon:
                break
            arrivals.append((t, None))
        if behavior.show_start_burst > 0:
            for show in timeline.shows:
                airs_at = params.start_time + (show.first_chunk + 1) * d
                if airs_at < first_playable or airs_at >= horizon:
                    continue
                for _ in range(_poisson(arrival_rng, behavior.show_start_burst)):
                    when = airs_at + arrival_rng.uniform(0, 60)
                    if when < horizon:
                        arrivals.append((when, show.first_chunk))

    arrivals.sort(key=lambda a: (a[0], a[1] if a[1] is not None else -1))
    events: list[SessionEvent] = []
    for peer_id, (join_time, forced) in enumerate(arrivals):
        session_rng = random.Random(f"session:{seed}:{peer_id}")
        events.extend(_session_events(session_rng, behavior, timeline, horizon,
                                      peer_id, join_time, forced))
    events.sort(key=lambda e: (e.time, e.peer_id))
    return events


def generate_profiles(
    events: list[SessionEvent],
    upload_capacity: int = 3,
    storage_capacity: int = 100_000,
) -> dict[int, PeerProfile]:
    """One profile per peer appearing in the event stream."""
    profiles: dict[int, PeerProfile] = {}
    for e in events:
        if e.kind is SessionEventKind.JOIN:
            profiles[e.peer_id] = PeerProfile(
                peer_id=e.peer_id,
                upload_capacity=upload_capacity,
                storage_capacity=storage_capacity,
                join_time=e.time,
            )
    return profiles


def early_quit_stats(
    events: list[SessionEvent],
    timeline: StreamTimeline,
    window_seconds: float,
    horizon: float,
) -> tuple[int, int]:
    """(show joiners, early quitters) over sessions joining at a show start.

    A session counts as a show joiner when its join position is the
    first chunk of some show; it counts as an early quitter when it
    leaves within `window_seconds` of joining. Sessions still active at
    the horizon are censored and excluded from both counts.
    """
    starts = {s.first_chunk for s in timeline.shows}
    join_at: dict[int, float] = {}
    join_pos: dict[int, int] = {}
    joiners = 0
    early = 0
    for e in events:
        if e.kind is SessionEventKind.JOIN:
            join_at[e.peer_id] = e.time
            join_pos[e.peer_id] = e.position if e.position is not None else -1
        elif e.kind is SessionEventKind.LEAVE:
            if e.time >= horizon or join_pos.get(e.peer_id) not in starts:
                continue
            joiners += 1
            if e.time - join_at[e.peer_id] <= window_seconds:
                early += 1
    return joiners, early
