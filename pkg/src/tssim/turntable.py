"""Rotating sector structure shared by the tree and mesh overlay variants.

Chunks are dealt round-robin onto m sectors (chunk id mod m), so a
viewer consuming consecutive chunks walks the sectors in a circle, one
hop per chunk. Each sector elects a few long-lived members as
representants: the producer pushes every fresh chunk to the
representants of its sector, and requests from outside enter the sector
through them. How a chunk spreads or is found inside a sector is the
variant's business (a diffusion tree or a gossip mesh); this module
owns membership, representant election, publication fan-out, the
sector-hopping request loop, and the shortcut links peers keep into the
next sector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

PRODUCER = -1  # sentinel peer id for the source

MAX_HANDOFF_LINKS = 2


def sector_of_chunk(chunk_id: int, m: int) -> int:
    if m < 1:
        raise ValueError(f"sector count must be at least 1, got {m}")
    if chunk_id < 0:
        raise ValueError(f"negative chunk id {chunk_id}")
    return chunk_id % m


@dataclass(frozen=True)
class HookupRequest:
    requester: int
    target_chunk: int
    hop_count: int = 0


@dataclass(frozen=True)
class RouteOutcome:
    served_by: int | None  # None means MissingChunk
    hops: int

    @property
    def missing(self) -> bool:
        return self.served_by is None


@dataclass
class Sector:
    index: int
    members: dict[int, int] = field(default_factory=dict)  # peer id -> join seq

    def representants(self, r: int) -> list[int]:
        """The r longest-lived members (ties broken by lower peer id)."""
        ranked = sorted(self.members, key=lambda pid: (self.members[pid], pid))
        return ranked[:r]


class Turntable:
    """Membership, publication, and request entry over m sectors.

    Intra-sector lookup is delegated through `sector_router`, a callable
    (sector_index, entry_peer, chunk_id) -> RouteOutcome installed by
    the active variant.
    """

    def __init__(self, m: int, r: int = 2):
        if m < 1:
            raise ValueError(f"need at least one sector, got m={m}")
        if r < 1:
            raise ValueError(f"need at least one representant slot, got r={r}")
        self.m = m
        self.r = r
        self.sectors = [Sector(index=i) for i in range(m)]
        self.sector_of_peer: dict[int, int] = {}
        self.handoff_links: dict[int, list[int]] = {}
        self.producer_retained: dict[int, list[int]] = {}  # sector -> chunk ids
        self.stale_handoffs = 0
        self._join_seq = 0
        self.sector_router = None

    # -- membership --------------------------------------------------------

    def join(self, peer_id: int) -> int:
        """Add a peer to the emptiest sector; returns the sector index."""
        if peer_id in self.sector_of_peer:
            raise ValueError(f"peer {peer_id} already joined")
        target = min(self.sectors, key=lambda s: (len(s.members), s.index))
        target.members[peer_id] = self._join_seq
        self._join_seq += 1
        self.sector_of_peer[peer_id] = target.index
        return target.index

    def leave(self, peer_id: int) -> int:
        sector_idx = self.sector_of_peer.pop(peer_id)
        del self.sectors[sector_idx].members[peer_id]
        # links other peers hold toward this one are not scrubbed here;
        # they go stale and are discovered (and counted) at handoff time
        self.handoff_links.pop(peer_id, None)
        return sector_idx

    def representants_of(self, sector_idx: int) -> list[int]:
        return self.sectors[sector_idx].representants(self.r)

    # -- publication -------------------------------------------------------

    def publish_chunk(self, chunk_id: int) -> list[tuple[int, int]]:
        """Producer sends of (representant, chunk id); empty if retained.

        An empty target sector keeps the chunk at the producer; it is
        listed for republication once the sector has members again.
        """
        s = sector_of_chunk(chunk_id, self.m)
        reps = self.representants_of(s)
        if not reps:
            self.producer_retained.setdefault(s, []).append(chunk_id)
            return []
        return [(rep, chunk_id) for rep in reps]

    def retained_for(self, sector_idx: int) -> list[int]:
        return self.producer_retained.get(sector_idx, [])

    def retain_for_sector(self, sector_idx: int, chunk_id: int) -> None:
        """Put a chunk back on the producer's republish list."""
        self.producer_retained.setdefault(sector_idx, []).append(chunk_id)

    def clear_retained(self, sector_idx: int) -> list[int]:
        return self.producer_retained.pop(sector_idx, [])

    # -- request routing ---------------------------------------------------

    def route_hookup(self, request: HookupRequest) -> RouteOutcome:
        """Resolve a chunk request to a serving peer in the right sector.

        A requester already inside the target sector starts at its own
        node; anyone else pays one hop to reach a representant. The
        variant router does the rest.
        """
        if self.sector_router is None:
            raise RuntimeError("no variant router installed")
        s = sector_of_chunk(request.target_chunk, self.m)
        entry_hops = request.hop_count
        if self.sector_of_peer.get(request.requester) == s:
            entry = request.requester
        else:
            reps = self.representants_of(s)
            if not reps:
                return RouteOutcome(served_by=None, hops=entry_hops)
            entry = reps[0]
            entry_hops += 1
        outcome = self.sector_router(s, entry, request.target_chunk)
        return RouteOutcome(served_by=outcome.served_by,
                            hops=entry_hops + outcome.hops)

    # -- inter-sector shortcut links ---------------------------------------

    def offer_handoff(self, server: int, next_chunk: int, stores) -> int | None:
        """Shortcut for the requester's next chunk, if the server has one.

        `stores(peer_id, chunk_id)` says whether a peer currently holds
        a chunk. Links that point at departed peers or peers that
        dropped the chunk are purged and counted as stale.
        """
        next_sector = sector_of_chunk(next_chunk, self.m)
        links = self.handoff_links.get(server, [])
        for candidate in list(links):
            if self.sector_of_peer.get(candidate) != next_sector:
                links.remove(candidate)
                self.stale_handoffs += 1
                continue
            if not stores(candidate, next_chunk):
                links.remove(candidate)
                self.stale_handoffs += 1
                continue
            return candidate
        return None

    def refresh_handoff_link(self, peer: int, target: int) -> None:
        """Remember `target` (in peer's next sector) for future handoffs."""
        own = self.sector_of_peer.get(peer)
        if own is None or self.sector_of_peer.get(target) != (own + 1) % self.m:
            return
        links = self.handoff_links.setdefault(peer, [])
        if target in links:
            return
        links.insert(0, target)
        del links[MAX_HANDOFF_LINKS:]
