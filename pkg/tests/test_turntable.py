import pytest

from tssim.turntable import (
    HookupRequest,
    RouteOutcome,
    Turntable,
    sector_of_chunk,
)


def test_sector_of_chunk_rotation():
    for m in (1, 3, 4, 12):
        assert sector_of_chunk(0, m) == 0
        assert sector_of_chunk(m, m) == 0
        assert sector_of_chunk(2 * m, m) == 0
        assert sector_of_chunk(m - 1, m) == m - 1
    assert sector_of_chunk(7, 3) == 1


def test_sector_of_chunk_validation():
    with pytest.raises(ValueError):
        sector_of_chunk(0, 0)
    with pytest.raises(ValueError):
        sector_of_chunk(-1, 4)


def test_join_balances_sectors():
    tt = Turntable(m=3)
    for pid in range(7):
        tt.join(pid)
    sizes = [len(s.members) for s in tt.sectors]
    assert sizes == [3, 2, 2]
    assert tt.sector_of_peer[0] == 0
    assert tt.sector_of_peer[1] == 1
    assert tt.sector_of_peer[2] == 2
    assert tt.sector_of_peer[3] == 0  # ties resolved toward the lowest index


def test_every_peer_in_exactly_one_sector():
    tt = Turntable(m=4)
    for pid in range(10):
        tt.join(pid)
    seen = set()
    for s in tt.sectors:
        assert not (seen & set(s.members))
        seen |= set(s.members)
    assert seen == set(range(10))
    tt.leave(3)
    assert 3 not in tt.sector_of_peer


def test_representants_are_longest_lived():
    tt = Turntable(m=1, r=2)
    for pid in (5, 9, 2, 7):
        tt.join(pid)
    assert tt.representants_of(0) == [5, 9]
    tt.leave(5)
    assert tt.representants_of(0) == [9, 2]


def test_publish_rotation_pattern():
    tt = Turntable(m=4, r=1)
    for pid in range(8):
        tt.join(pid)
    pattern = []
    for chunk in range(8):
        sends = tt.publish_chunk(chunk)
        assert len(sends) == 1
        rep = sends[0][0]
        pattern.append(tt.sector_of_peer[rep])
    assert pattern == [0, 1, 2, 3, 0, 1, 2, 3]


def test_publish_to_empty_sector_retains():
    tt = Turntable(m=4)
    tt.join(0)  # lands in sector 0
    sends = tt.publish_chunk(1)  # sector 1 is empty
    assert sends == []
    assert tt.retained_for(1) == [1]
    assert tt.clear_retained(1) == [1]
    assert tt.retained_for(1) == []


def test_publish_fans_out_to_each_representant():
    tt = Turntable(m=2, r=2)
    for pid in range(6):
        tt.join(pid)
    sends = tt.publish_chunk(0)
    assert len(sends) == 2
    assert all(chunk == 0 for _, chunk in sends)


def make_routed_turntable(m, holders):
    """Turntable whose sector router serves from a static holder map."""
    tt = Turntable(m=m, r=1)

    def router(sector_idx, entry, chunk_id):
        for pid in sorted(holders.get(chunk_id, ())):
            if tt.sector_of_peer.get(pid) == sector_idx:
                return RouteOutcome(served_by=pid, hops=0 if pid == entry else 1)
        return RouteOutcome(served_by=None, hops=1)

    tt.sector_router = router
    return tt


def test_route_hookup_unique_replica():
    tt = make_routed_turntable(3, {4: {1}})
    for pid in range(3):
        tt.join(pid)  # pid i -> sector i
    out = tt.route_hookup(HookupRequest(requester=0, target_chunk=4))
    assert out.served_by == 1
    assert not out.missing


def test_route_hookup_missing_chunk():
    tt = make_routed_turntable(3, {})
    for pid in range(3):
        tt.join(pid)
    out = tt.route_hookup(HookupRequest(requester=0, target_chunk=5))
    assert out.missing


def test_sequential_requests_walk_sectors():
    tt = make_routed_turntable(4, {c: {c % 4} for c in range(8)})
    for pid in range(4):
        tt.join(pid)
    for c in range(7):
        first = sector_of_chunk(c, 4)
        second = sector_of_chunk(c + 1, 4)
        assert second == (first + 1) % 4
        out = tt.route_hookup(HookupRequest(requester=3, target_chunk=c))
        assert tt.sector_of_peer[out.served_by] == first


def test_handoff_direct_serve():
    tt = Turntable(m=3, r=1)
    for pid in range(6):
        tt.join(pid)  # pid 0,3 -> sector 0; 1,4 -> sector 1; 2,5 -> sector 2
    tt.refresh_handoff_link(0, 4)  # peer 0 (sector 0) knows peer 4 (sector 1)
    candidate = tt.offer_handoff(0, next_chunk=4, stores=lambda p, c: p == 4)
    assert candidate == 4
    assert tt.stale_handoffs == 0


def test_handoff_without_link_falls_back():
    tt = Turntable(m=3, r=1)
    for pid in range(3):
        tt.join(pid)
    assert tt.offer_handoff(0, next_chunk=1, stores=lambda p, c: True) is None


def test_handoff_stale_target_counted():
    tt = Turntable(m=3, r=1)
    for pid in range(6):
        tt.join(pid)
    tt.refresh_handoff_link(0, 4)
    tt.leave(4)
    candidate = tt.offer_handoff(0, next_chunk=4, stores=lambda p, c: True)
    assert candidate is None
    assert tt.stale_handoffs == 1
    # link to a peer that dropped the chunk is also stale
    tt.refresh_handoff_link(0, 1)
    candidate = tt.offer_handoff(0, next_chunk=4, stores=lambda p, c: False)
    assert candidate is None
    assert tt.stale_handoffs == 2


def test_handoff_links_capped_and_scoped():
    tt = Turntable(m=2, r=1)
    for pid in range(8):
        tt.join(pid)  # even -> sector 0, odd -> sector 1
    tt.refresh_handoff_link(0, 1)
    tt.refresh_handoff_link(0, 3)
    tt.refresh_handoff_link(0, 5)
    assert len(tt.handoff_links[0]) == 2
    assert tt.handoff_links[0] == [5, 3]  # most recent first
    tt.refresh_handoff_link(0, 2)  # same sector as peer 0: refused
    assert 2 not in tt.handoff_links[0]


def test_turntable_validation():
    with pytest.raises(ValueError):
        Turntable(m=0)
    with pytest.raises(ValueError):
        Turntable(m=3, r=0)
    tt = Turntable(m=2)
    tt.join(1)
    with pytest.raises(ValueError):
        tt.join(1)
