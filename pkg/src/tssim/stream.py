"""Source stream model: fixed-size chunks, shows, and the lag coordinate.

The source emits an append-only sequence of equal-size chunks. Shows
partition that sequence into consecutive, non-overlapping runs. Every
overlay in the package addresses positions by *lag*: the distance in
whole chunks between the newest recorded chunk (the head) and the chunk
a viewer is playing. Lag 0 is the live edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

DEFAULT_BITRATE_BPS = 500_000
DEFAULT_CHUNK_SIZE_BYTES = 2_000_000
DEFAULT_SHOW_SECONDS = 1800.0


@dataclass(frozen=True)
class StreamParams:
    bitrate_bps: float = DEFAULT_BITRATE_BPS
    chunk_size_bytes: int = DEFAULT_CHUNK_SIZE_BYTES
    start_time: float = 0.0

    def __post_init__(self) -> None:
        if self.bitrate_bps <= 0:
            raise ValueError(f"bitrate_bps must be positive, got {self.bitrate_bps}")
        if self.chunk_size_bytes <= 0:
            raise ValueError(
                f"chunk_size_bytes must be positive, got {self.chunk_size_bytes}"
            )


@dataclass(frozen=True)
class Chunk:
    """One stream chunk; carries an id and a timestamp, never payload."""

    id: int
    produced_at: float


@dataclass(frozen=True)
class Show:
    id: int
    first_chunk: int
    last_chunk: int
    popularity_rank: int  # 1 = most popular (the most recent show by default)

    def __post_init__(self) -> None:
        if self.first_chunk > self.last_chunk:
            raise ValueError(f"show {self.id}: first_chunk > last_chunk")

    @property
    def length_chunks(self) -> int:
        return self.last_chunk - self.first_chunk + 1

    def contains(self, chunk_id: int) -> bool:
        return self.first_chunk <= chunk_id <= self.last_chunk


def chunk_duration(params: StreamParams) -> float:
    """Seconds of playback per chunk."""
    return params.chunk_size_bytes * 8 / params.bitrate_bps


def chunks_per_day(params: StreamParams) -> float:
    """Chunks recorded over 24 hours at the configured rate."""
    return 86_400 / chunk_duration(params)


def archive_chunks(params: StreamParams, days: float) -> float:
    """Chunks a full archive of `days` of stream history holds."""
    if days < 0:
        raise ValueError(f"negative archive span {days}")
    return days * chunks_per_day(params)


def archive_bytes(params: StreamParams, days: float) -> float:
    return archive_chunks(params, days) * params.chunk_size_bytes


def chunk_at_position(params: StreamParams, position_time: float) -> int:
    """Chunk id covering an absolute stream position (in seconds)."""
    if position_time < params.start_time:
        raise ValueError(
            f"position {position_time} precedes stream start {params.start_time}"
        )
    return math.floor((position_time - params.start_time) / chunk_duration(params))


def lag_of(position_chunk: int, head_chunk: int) -> int:
    """Lag in chunks of a playing position behind the head; 0 = live edge."""
    if position_chunk > head_chunk:
        raise ValueError(f"position {position_chunk} is ahead of head {head_chunk}")
    return head_chunk - position_chunk


def pause_lag_increase(params: StreamParams, pause_seconds: float) -> int:
    """Extra lag in whole chunks accumulated over a pause.

    Rounded up: a resumed viewer may sit slightly further behind than the
    raw ratio, never ahead of it.
    """
    if pause_seconds < 0:
        raise ValueError(f"negative pause duration {pause_seconds}")
    return math.ceil(pause_seconds / chunk_duration(params))


def head_chunk_at(params: StreamParams, time: float) -> int:
    """Id of the newest fully recorded chunk at an instant; -1 before any.

    Chunk c covers stream interval [c*d, (c+1)*d) and only becomes
    fetchable once its recording completes, at start_time + (c+1)*d.
    """
    if time < params.start_time:
        raise ValueError(f"time {time} precedes stream start {params.start_time}")
    return math.floor((time - params.start_time) / chunk_duration(params)) - 1


def produced_chunk(params: StreamParams, chunk_id: int) -> Chunk:
    if chunk_id < 0:
        raise ValueError(f"negative chunk id {chunk_id}")
    return Chunk(id=chunk_id, produced_at=params.start_time + chunk_id * chunk_duration(params))


@dataclass
class StreamTimeline:
    """Shows tiling the chunk sequence plus the advancing head pointer."""

    params: StreamParams
    shows: list[Show] = field(default_factory=list)
    head_chunk: int = -1

    def advance_head(self, new_head: int) -> None:
        if new_head < self.head_chunk:
            raise ValueError(
                f"head may not move backwards ({self.head_chunk} -> {new_head})"
            )
        self.head_chunk = new_head

    def show_of_chunk(self, chunk_id: int) -> Show:
        if not self.shows or chunk_id < 0 or chunk_id > self.shows[-1].last_chunk:
            raise ValueError(f"chunk {chunk_id} outside the tiled range")
        # Shows all have the same length except possibly the last, so a
        # direct index computation would work, but a bisect stays correct
        # if the tiling ever becomes irregular.
        lo, hi = 0, len(self.shows) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self.shows[mid].last_chunk < chunk_id:
                lo = mid + 1
            else:
                hi = mid
        return self.shows[lo]

    def shows_started_by(self, head: int) -> list[Show]:
        """Shows whose first chunk exists at the given head (oldest first)."""
        return [s for s in self.shows if s.first_chunk <= head]


def build_timeline(
    params: StreamParams,
    horizon_seconds: float,
    show_seconds: float = DEFAULT_SHOW_SECONDS,
) -> StreamTimeline:
    """Tile every chunk recorded within the horizon into consecutive shows.

    Show boundaries are chunk-aligned; the requested show length is
    rounded to the nearest whole number of chunks (minimum 1). Popularity
    ranks run from the most recent show (rank 1) backwards.
    """
    if horizon_seconds <= 0:
        raise ValueError(f"horizon must be positive, got {horizon_seconds}")
    if show_seconds <= 0:
        raise ValueError(f"show length must be positive, got {show_seconds}")
    final_head = head_chunk_at(params, params.start_time + horizon_seconds)
    show_chunks = max(1, round(show_seconds / chunk_duration(params)))
    n_chunks = final_head + 1
    n_shows = max(1, math.ceil(n_chunks / show_chunks)) if n_chunks > 0 else 1
    shows = []
    for i in range(n_shows):
        first = i * show_chunks
        last = min((i + 1) * show_chunks, max(n_chunks, 1)) - 1
        shows.append(
            Show(id=i, first_chunk=first, last_chunk=last, popularity_rank=n_shows - i)
        )
    return StreamTimeline(params=params, shows=shows, head_chunk=-1)
