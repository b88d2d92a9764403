"""Per-sector gossip mesh with colored diffusion and routing.

Instead of a tree, each sector's members keep bounded partial views of
one another, refreshed by periodic view shuffles. Peers and chunks both
carry a color; a chunk is stored only on peers of its color, and a
request for it is forwarded along peers of that color. When every color
class dominates the mesh (each peer sees every color in its view), any
peer is one hop from somebody responsible for any chunk. Building such
a partition exactly is hard, so peers just adopt the color their
neighborhood lacks most and the shortfall is measured rather than
prevented.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from tssim.turntable import RouteOutcome

DEFAULT_COLORS = 3
DEFAULT_GOSSIP_PERIOD = 10.0
DEFAULT_MAX_DEGREE = 8


@dataclass(frozen=True)
class ColorScheme:
    """Maps chunk ids to colors, rotating within each sector's slots."""

    colors: int
    sector_count: int

    def __post_init__(self):
        if self.colors < 1:
            raise ValueError(f"need at least one color, got {self.colors}")
        if self.sector_count < 1:
            raise ValueError(f"need at least one sector, got {self.sector_count}")

    def chunk_color(self, chunk_id: int) -> int:
        if chunk_id < 0:
            raise ValueError(f"chunk id must be non-negative, got {chunk_id}")
        return (chunk_id // self.sector_count) % self.colors


@dataclass
class NeighborEntry:
    color: int
    last_seen: float


@dataclass
class MeshPeer:
    peer_id: int
    color: int
    last_gossip: float
    neighbors: dict[int, NeighborEntry] = field(default_factory=dict)
    store: set[int] = field(default_factory=set)
    known_offers: dict[int, set[int]] = field(default_factory=dict)
    storage_capacity: int = 10**9
    missing_color_streak: int = 0


@dataclass(frozen=True)
class GossipReport:
    peer: int
    partner: int | None  # None when the view was empty
    bootstrapped: bool
    sent_entries: int
    received_entries: int
    adopted: tuple[tuple[int, int], ...]  # (adopter, chunk) pairs
    purged: int

    @property
    def adopted_chunks(self) -> int:
        return len(self.adopted)


@dataclass(frozen=True)
class ColoredDiffusion:
    pinned: list[int]
    gap: bool  # representant had nobody of the chunk's color


class SectorMesh:
    """One sector's gossip overlay. All mutation goes through the engine."""

    def __init__(
        self,
        scheme: ColorScheme,
        rng: random.Random,
        gossip_period: float = DEFAULT_GOSSIP_PERIOD,
        max_degree: int = DEFAULT_MAX_DEGREE,
        k_rep: int = 3,
    ):
        if gossip_period <= 0:
            raise ValueError(f"gossip period must be positive, got {gossip_period}")
        if max_degree < 1:
            raise ValueError(f"max_degree must be at least 1, got {max_degree}")
        if k_rep < 1:
            raise ValueError(f"k_rep must be at least 1, got {k_rep}")
        self.scheme = scheme
        self.rng = rng
        self.gossip_period = gossip_period
        self.max_degree = max_degree
        self.k_rep = k_rep
        self.peers: dict[int, MeshPeer] = {}
        self._join_order: list[int] = []
        self.stale_evictions = 0
        self.coloring_gaps = 0
        self.gap_pins: set[tuple[int, int]] = set()  # (chunk_id, peer_id)
        self.legacy_pins: set[tuple[int, int]] = set()  # pinned before a re-color
        self.recolor_events = 0
        self.route_detours = 0
        self.shuffle_messages = 0
        self.bootstrap_messages = 0

    # -- membership ----------------------------------------------------------

    def representant(self, excluding: int | None = None) -> int | None:
        """Longest-lived member, the fallback contact for lost peers."""
        for pid in self._join_order:
            if pid != excluding and pid in self.peers:
                return pid
        return None

    def add_peer(self, peer_id: int, now: float, storage_capacity: int = 10**9) -> MeshPeer:
        if peer_id in self.peers:
            raise ValueError(f"peer {peer_id} already in mesh")
        peer = MeshPeer(peer_id=peer_id, color=0, last_gossip=now,
                        storage_capacity=storage_capacity)
        others = sorted(self.peers)
        if others:
            rep = self.representant()
            seeds = {rep}
            spare = [pid for pid in others if pid != rep]
            extra = min(len(spare), self.max_degree - 1)
            if extra:
                seeds.update(self.rng.sample(spare, extra))
            for pid in sorted(seeds):
                peer.neighbors[pid] = NeighborEntry(self.peers[pid].color, now)
        self.peers[peer_id] = peer
        self._join_order.append(peer_id)
        peer.color = self.assign_color(peer_id)
        return peer

    def remove_peer(self, peer_id: int) -> None:
        del self.peers[peer_id]
        # entries pointing here elsewhere decay through the staleness bound

    # -- coloring --------------------------------------------------------------

    def assign_color(self, peer_id: int) -> int:
        """Least-represented color in the peer's view, ties to the lowest."""
        peer = self.peers[peer_id]
        counts = [0] * self.scheme.colors
        for entry in peer.neighbors.values():
            counts[entry.color % self.scheme.colors] += 1
        return min(range(self.scheme.colors), key=lambda c: (counts[c], c))

    def domination_report(self) -> tuple[int, int]:
        """(peers missing some color among live neighbors, peers scanned)."""
        violations = 0
        for peer in self.peers.values():
            present = {
                self.peers[pid].color
                for pid in peer.neighbors
                if pid in self.peers
            }
            if len(present) < self.scheme.colors:
                violations += 1
        return violations, len(self.peers)

    # -- gossip ------------------------------------------------------------------

    def _sample_view(self, peer: MeshPeer, now: float) -> list[tuple[int, int, float]]:
        entries = sorted(peer.neighbors.items())
        size = min(len(entries), max(1, self.max_degree // 2))
        picked = self.rng.sample(entries, size) if entries else []
        sample = [(pid, e.color, e.last_seen) for pid, e in picked]
        sample.append((peer.peer_id, peer.color, now))
        return sample

    def _merge_view(self, peer: MeshPeer, sample: list[tuple[int, int, float]],
                    now: float) -> None:
        for pid, color, seen in sample:
            if pid == peer.peer_id:
                continue
            if pid not in self.peers:
                continue  # probing a forwarded entry fails if it departed
            entry = peer.neighbors.get(pid)
            if entry is None:
                peer.neighbors[pid] = NeighborEntry(color, seen)
            elif seen >= entry.last_seen:
                entry.color = color
                entry.last_seen = seen
        while len(peer.neighbors) > self.max_degree:
            # evict the oldest entry, but keep the last entry of any color:
            # views that retain one peer per color keep the partition goal
            # (each color dominating) within reach of pure local repair
            tally: dict[int, int] = {}
            for e in peer.neighbors.values():
                tally[e.color] = tally.get(e.color, 0) + 1
            spare = [kv for kv in peer.neighbors.items() if tally[kv[1].color] > 1]
            pool = spare if spare else list(peer.neighbors.items())
            oldest = min(pool, key=lambda kv: (kv[1].last_seen, kv[0]))
            del peer.neighbors[oldest[0]]

    def _purge_departed(self, peer: MeshPeer, now: float) -> int:
        horizon = now - 2 * self.gossip_period
        stale = [
            pid for pid, e in sorted(peer.neighbors.items())
            if pid not in self.peers and e.last_seen < horizon
        ]
        for pid in stale:
            del peer.neighbors[pid]
            peer.known_offers.pop(pid, None)
        self.stale_evictions += len(stale)
        return len(stale)

    def _own_color_offers(self, peer: MeshPeer) -> set[int]:
        return {c for c in peer.store if self.scheme.chunk_color(c) == peer.color}

    def _receive_offers(self, peer: MeshPeer, sender: MeshPeer,
                        offers: set[int]) -> list[int]:
        peer.known_offers[sender.peer_id] = set(offers)
        adopted = []
        for chunk in sorted(offers):
            if self.scheme.chunk_color(chunk) != peer.color:
                continue
            if chunk in peer.store or len(peer.store) >= peer.storage_capacity:
                continue
            if self.replica_count(chunk) >= self.k_rep:
                continue
            peer.store.add(chunk)
            adopted.append(chunk)
        return adopted

    def gossip_round(self, peer_id: int, now: float) -> GossipReport:
        """One view shuffle: swap samples with a partner, then swap offers."""
        peer = self.peers[peer_id]
        peer.last_gossip = now
        purged = self._purge_departed(peer, now)
        self._check_recolor(peer)

        alive = [pid for pid in sorted(peer.neighbors) if pid in self.peers]
        if not alive:
            rep = self.representant(excluding=peer_id)
            if rep is not None:
                peer.neighbors[rep] = NeighborEntry(self.peers[rep].color, now)
                self.bootstrap_messages += 1
                return GossipReport(peer_id, rep, True, 0, 0, (), purged)
            return GossipReport(peer_id, None, False, 0, 0, (), purged)

        partner_id = self.rng.choice(alive)
        partner = self.peers[partner_id]
        sent = self._sample_view(peer, now)
        back = self._sample_view(partner, now)
        self._merge_view(partner, sent, now)
        self._merge_view(peer, back, now)
        peer.neighbors[partner_id] = NeighborEntry(partner.color, now)
        partner.neighbors[peer_id] = NeighborEntry(peer.color, now)
        self.shuffle_messages += 2

        pairs = [(partner_id, c) for c in
                 self._receive_offers(partner, peer, self._own_color_offers(peer))]
        pairs += [(peer_id, c) for c in
                  self._receive_offers(peer, partner, self._own_color_offers(partner))]
        return GossipReport(peer_id, partner_id, False, len(sent), len(back),
                            tuple(pairs), purged)

    def _check_recolor(self, peer: MeshPeer) -> None:
        present = {e.color for e in peer.neighbors.values()}
        if peer.neighbors and len(present) < self.scheme.colors:
            peer.missing_color_streak += 1
        else:
            peer.missing_color_streak = 0
        if peer.missing_color_streak >= 2:
            fresh = self.assign_color(peer.peer_id)
            peer.missing_color_streak = 0
            if fresh != peer.color:
                peer.color = fresh
                self.recolor_events += 1
                for chunk in peer.store:
                    if self.scheme.chunk_color(chunk) != fresh:
                        self.legacy_pins.add((chunk, peer.peer_id))

    # -- chunk placement -----------------------------------------------------------

    def replica_count(self, chunk_id: int) -> int:
        return sum(1 for p in self.peers.values() if chunk_id in p.store)

    def holders(self, chunk_id: int) -> list[int]:
        return sorted(pid for pid, p in self.peers.items() if chunk_id in p.store)

    def colored_diffuse(self, rep_id: int, chunk_id: int) -> ColoredDiffusion:
        """Flood the chunk through its color class, stopping at k_rep pins."""
        col = self.scheme.chunk_color(chunk_id)
        rep = self.peers[rep_id]
        pinned: list[int] = []

        def try_pin(p: MeshPeer) -> None:
            if chunk_id not in p.store and len(p.store) < p.storage_capacity:
                p.store.add(chunk_id)
                pinned.append(p.peer_id)

        queue: list[int] = []
        seen: set[int] = set()
        if rep.color == col:
            queue.append(rep_id)
            seen.add(rep_id)
        else:
            starts = [
                pid for pid in sorted(rep.neighbors)
                if pid in self.peers and self.peers[pid].color == col
            ]
            if not starts:
                try_pin(rep)
                self.coloring_gaps += 1
                if pinned:
                    self.gap_pins.add((chunk_id, rep_id))
                return ColoredDiffusion(pinned=pinned, gap=True)
            queue.extend(starts)
            seen.update(starts)

        while queue and len(pinned) < self.k_rep:
            pid = queue.pop(0)
            node = self.peers[pid]
            try_pin(node)
            if len(pinned) >= self.k_rep:
                break
            for nxt in sorted(node.neighbors):
                if nxt in seen or nxt not in self.peers:
                    continue
                if self.peers[nxt].color != col:
                    continue
                seen.add(nxt)
                queue.append(nxt)
        return ColoredDiffusion(pinned=pinned, gap=False)

    # -- routing ---------------------------------------------------------------------

    def route_request(self, start: int, chunk_id: int, ttl: int) -> RouteOutcome:
        """Color-directed greedy walk with one random detour per blocked hop."""
        col = self.scheme.chunk_color(chunk_id)
        cursor = self.peers[start]
        hops = 0
        visited = {start}
        while True:
            if chunk_id in cursor.store:
                return RouteOutcome(served_by=cursor.peer_id, hops=hops)
            if ttl <= 0:
                return RouteOutcome(served_by=None, hops=hops)
            lane = [
                pid for pid, e in sorted(cursor.neighbors.items())
                if pid not in visited and pid in self.peers and e.color == col
            ]
            if lane:
                offered = [p for p in lane
                           if chunk_id in cursor.known_offers.get(p, ())]
                nxt = offered[0] if offered else lane[0]
            else:
                detour = [pid for pid in sorted(cursor.neighbors)
                          if pid not in visited and pid in self.peers]
                if not detour:
                    return RouteOutcome(served_by=None, hops=hops)
                nxt = self.rng.choice(detour)
                self.route_detours += 1
            visited.add(nxt)
            cursor = self.peers[nxt]
            ttl -= 1
            hops += 1

    # -- health --------------------------------------------------------------------------

    def check_invariants(self, now: float) -> list[str]:
        problems = []
        # staleness bound plus one period: a departed entry can only be
        # noticed at the holder's next gossip tick
        horizon = now - 3 * self.gossip_period
        for pid, peer in sorted(self.peers.items()):
            if len(peer.neighbors) > self.max_degree:
                problems.append(f"peer {pid} view exceeds max_degree")
            if not 0 <= peer.color < self.scheme.colors:
                problems.append(f"peer {pid} has color {peer.color} out of range")
            for nid, entry in sorted(peer.neighbors.items()):
                if nid not in self.peers and entry.last_seen < horizon:
                    problems.append(f"peer {pid} holds departed {nid} beyond staleness bound")
        for pid, peer in sorted(self.peers.items()):
            for chunk in sorted(peer.store):
                if (chunk, pid) in self.gap_pins or (chunk, pid) in self.legacy_pins:
                    continue
                if self.scheme.chunk_color(chunk) != peer.color:
                    problems.append(f"peer {pid} stores off-color chunk {chunk}")
        return problems

    def is_connected(self) -> bool:
        """BFS over live view edges, both directions counted."""
        if not self.peers:
            return True
        adj: dict[int, set[int]] = {pid: set() for pid in self.peers}
        for pid, peer in self.peers.items():
            for nid in peer.neighbors:
                if nid in self.peers:
                    adj[pid].add(nid)
                    adj[nid].add(pid)
        seen = set()
        stack = [min(self.peers)]
        while stack:
            pid = stack.pop()
            if pid in seen:
                continue
            seen.add(pid)
            stack.extend(adj[pid] - seen)
        return len(seen) == len(self.peers)
