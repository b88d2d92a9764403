import math
import random

import pytest

from tssim.stream import (
    StreamParams,
    build_timeline,
    chunk_at_position,
    chunk_duration,
    head_chunk_at,
    lag_of,
    pause_lag_increase,
    produced_chunk,
)


def test_default_chunk_duration_is_32_seconds():
    assert chunk_duration(StreamParams()) == 32.0


def test_unit_chunk_duration():
    assert chunk_duration(StreamParams(bitrate_bps=1, chunk_size_bytes=1)) == 8.0


def test_chunks_per_day_at_default_rate():
    per_day = 86400 / chunk_duration(StreamParams())
    assert per_day == 2700


def test_month_of_storage_close_to_round_figures():
    params = StreamParams()
    chunks = 30 * 86400 / chunk_duration(params)
    assert chunks == 81000
    assert abs(chunks - 80000) / 80000 < 0.05
    gigabytes = chunks * params.chunk_size_bytes / 1e9
    assert gigabytes == 162.0
    assert abs(gigabytes - 160) / 160 < 0.05


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        StreamParams(bitrate_bps=0)
    with pytest.raises(ValueError):
        StreamParams(chunk_size_bytes=-1)


def test_chunk_at_position_origin_and_flooring():
    params = StreamParams()
    assert chunk_at_position(params, params.start_time) == 0
    assert chunk_at_position(params, params.start_time + 64.0) == 2
    assert chunk_at_position(params, params.start_time + 95.0) == 2


def test_chunk_at_position_before_start_rejected():
    params = StreamParams(start_time=100.0)
    with pytest.raises(ValueError):
        chunk_at_position(params, 99.9)


def test_lag_of():
    assert lag_of(7, 7) == 0
    assert lag_of(0, 2700) == 2700
    assert lag_of(10, 15) == 5
    with pytest.raises(ValueError):
        lag_of(16, 15)


def test_produced_at_round_trip():
    params = StreamParams(start_time=12.5)
    rng = random.Random("stream-roundtrip")
    for _ in range(200):
        cid = rng.randrange(0, 100_000)
        chunk = produced_chunk(params, cid)
        assert chunk.produced_at == params.start_time + cid * chunk_duration(params)
        assert chunk_at_position(params, chunk.produced_at) == cid


def test_pause_lag_increase_rounds_up():
    params = StreamParams()  # 32 s chunks
    assert pause_lag_increase(params, 64.0) == 2
    assert pause_lag_increase(params, 0.0) == 0
    assert pause_lag_increase(params, 1.0) == 1
    assert pause_lag_increase(params, 32.0) == 1
    assert pause_lag_increase(params, 32.1) == 2
    with pytest.raises(ValueError):
        pause_lag_increase(params, -1.0)


def test_pause_lag_increase_never_below_exact_ratio():
    params = StreamParams()
    rng = random.Random("pause-ceil")
    d = chunk_duration(params)
    for _ in range(500):
        pause = rng.uniform(0, 5000)
        got = pause_lag_increase(params, pause)
        assert got >= pause / d
        assert got < pause / d + 1


def test_head_chunk_at_counts_completed_recordings():
    params = StreamParams()
    assert head_chunk_at(params, 0.0) == -1
    assert head_chunk_at(params, 31.9) == -1
    assert head_chunk_at(params, 32.0) == 0
    # One hour of recording completes 112 chunks (ids 0..111).
    assert head_chunk_at(params, 3600.0) == 111


def test_timeline_tiles_chunks_without_gaps_or_overlaps():
    params = StreamParams()
    timeline = build_timeline(params, horizon_seconds=6 * 3600, show_seconds=1800)
    covered = []
    for show in timeline.shows:
        covered.extend(range(show.first_chunk, show.last_chunk + 1))
    final_head = head_chunk_at(params, params.start_time + 6 * 3600)
    assert covered == list(range(final_head + 1))


def test_timeline_popularity_ranks_newest_first():
    timeline = build_timeline(StreamParams(), horizon_seconds=4 * 3600)
    ranks = [s.popularity_rank for s in timeline.shows]
    assert ranks == list(range(len(timeline.shows), 0, -1))
    assert timeline.shows[-1].popularity_rank == 1


def test_show_of_chunk_lookup():
    timeline = build_timeline(StreamParams(), horizon_seconds=8 * 3600)
    rng = random.Random("show-lookup")
    last = timeline.shows[-1].last_chunk
    for _ in range(300):
        cid = rng.randrange(0, last + 1)
        show = timeline.show_of_chunk(cid)
        assert show.first_chunk <= cid <= show.last_chunk
    with pytest.raises(ValueError):
        timeline.show_of_chunk(last + 1)


def test_head_advance_is_monotonic():
    timeline = build_timeline(StreamParams(), horizon_seconds=3600)
    timeline.advance_head(5)
    timeline.advance_head(5)
    timeline.advance_head(9)
    with pytest.raises(ValueError):
        timeline.advance_head(3)
