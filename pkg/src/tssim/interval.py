"""Flat overlay of per-peer lag intervals with coverage and capacity laws.

Each peer x buffers a contiguous range of lags [l, r] around its playing
position c (0 <= l <= c <= r; smaller lag = fresher). The chunks in
[l, c) are queued for playback, the ones in (c, r] were already played
and are kept for others. Two global constraints shape the assignment of
bounds: every lag in [0, T] must lie inside at least k intervals, and
the number of peers whose to-play range touches x's already-played
range must not exceed x's serving capacity.

Intervals are closed on integer lags throughout: lag t is covered by x
iff l <= t <= r, and two ranges intersect iff max of the left ends is
<= min of the right ends.

The module keeps two independent implementations of both constraint
checks (a literal double loop and a faster indexed form) so each can
vouch for the other, plus an exhaustive small-instance optimizer used
as ground truth for the greedy bound-assignment sweep.
"""

from __future__ import annotations

import math
from bisect import bisect_right, insort
from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class Interval:
    peer_id: int
    l: int  # fresh bound, in lag chunks
    c: int  # playing position, in lag chunks
    r: int  # old bound, in lag chunks

    def __post_init__(self) -> None:
        if not 0 <= self.l <= self.c <= self.r:
            raise ValueError(
                f"peer {self.peer_id}: bounds must satisfy 0 <= l <= c <= r, "
                f"got ({self.l}, {self.c}, {self.r})"
            )

    @property
    def length(self) -> int:
        return self.r - self.l

    def covers(self, lag: int) -> bool:
        return self.l <= lag <= self.r


def intervals_overlap(a: Interval, b: Interval) -> bool:
    return max(a.l, b.l) <= min(a.r, b.r)


@dataclass
class OverlayConstraints:
    k: int
    T: int  # oldest lag to protect
    default_cap: float = math.inf
    caps: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.T < 0:
            raise ValueError(f"T must be non-negative, got {self.T}")
        if self.default_cap < 0 or any(v < 0 for v in self.caps.values()):
            raise ValueError("capacities must be non-negative")

    def cap_of(self, peer_id: int) -> float:
        return self.caps.get(peer_id, self.default_cap)


@dataclass
class IntervalGraph:
    """Vertices are intervals; edges are the (derived) overlap relation."""

    T: int
    vertices: dict[int, Interval] = field(default_factory=dict)

    def add(self, interval: Interval) -> None:
        self.vertices[interval.peer_id] = interval

    def remove(self, peer_id: int) -> Interval:
        return self.vertices.pop(peer_id)

    def intervals(self) -> list[Interval]:
        return [self.vertices[pid] for pid in sorted(self.vertices)]

    def edges(self) -> set[tuple[int, int]]:
        ivs = self.intervals()
        out = set()
        for i, a in enumerate(ivs):
            for b in ivs[i + 1:]:
                if intervals_overlap(a, b):
                    out.add((a.peer_id, b.peer_id))
        return out

    def neighbors(self, peer_id: int) -> list[int]:
        me = self.vertices[peer_id]
        return [
            other.peer_id
            for other in self.intervals()
            if other.peer_id != peer_id and intervals_overlap(me, other)
        ]


def objective(intervals) -> int:
    """Total buffer length, the quantity the bound assignment minimizes."""
    if isinstance(intervals, IntervalGraph):
        intervals = intervals.intervals()
    return sum(iv.r - iv.l for iv in intervals)


# ---------------------------------------------------------------------------
# Constraint checkers. The two *naive* forms below are the reference
# semantics, written as literal recounts; the *fast* forms must agree
# with them on every instance and are the ones the simulation driver
# calls in hot paths.

def check_k_coverage(graph: IntervalGraph, constraints: OverlayConstraints) -> list[tuple[int, int]]:
    """Gaps as (lag, multiplicity) pairs; empty list means pass."""
    ivs = graph.intervals() if isinstance(graph, IntervalGraph) else list(graph)
    gaps = []
    for t in range(0, constraints.T + 1):
        count = 0
        for iv in ivs:
            if iv.covers(t):
                count += 1
        if count < constraints.k:
            gaps.append((t, count))
    return gaps


def check_capacity(graph: IntervalGraph, constraints: OverlayConstraints) -> list[tuple[int, int]]:
    """Overloaded peers as (peer_id, served_count) pairs; empty means pass.

    Peer y is served by x when y's to-play range [l_y, c_y] meets x's
    already-played range [c_x, r_x]. A peer never serves itself.
    """
    ivs = graph.intervals() if isinstance(graph, IntervalGraph) else list(graph)
    overloaded = []
    for x in ivs:
        count = 0
        for y in ivs:
            if y.peer_id == x.peer_id:
                continue
            if max(y.l, x.c) <= min(y.c, x.r):
                count += 1
        if count > constraints.cap_of(x.peer_id):
            overloaded.append((x.peer_id, count))
    return overloaded


def coverage_gaps_fast(intervals, k: int, T: int) -> list[tuple[int, int]]:
    """Difference-array recount of check_k_coverage."""
    if isinstance(intervals, IntervalGraph):
        intervals = intervals.intervals()
    diff = [0] * (T + 2)
    for iv in intervals:
        lo = max(iv.l, 0)
        hi = min(iv.r, T)
        if lo > T or hi < lo:
            continue
        diff[lo] += 1
        diff[hi + 1] -= 1
    gaps = []
    count = 0
    for t in range(0, T + 1):
        count += diff[t]
        if count < k:
            gaps.append((t, count))
    return gaps


def capacity_overloads_fast(intervals, constraints: OverlayConstraints) -> list[tuple[int, int]]:
    """Sorted-scan recount of check_capacity.

    The closed ranges [l_y, c_y] and [c_x, r_x] intersect iff
    l_y <= r_x and c_x <= c_y, so x's served count is the number of
    peers (including itself) with c >= c_x and l <= r_x, minus one for
    x itself (its own l <= c <= r always qualifies).
    """
    if isinstance(intervals, IntervalGraph):
        intervals = intervals.intervals()
    order = sorted(intervals, key=lambda iv: -iv.c)
    results = []
    lefts: list[int] = []  # l values of peers with c >= current group's c
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and order[j].c == order[i].c:
            insort(lefts, order[j].l)
            j += 1
        for x in order[i:j]:
            count = bisect_right(lefts, x.r) - 1
            if count > constraints.cap_of(x.peer_id):
                results.append((x.peer_id, count))
        i = j
    results.sort()
    return results


def _charge(intervals: list[Interval], x: Interval, cap: float) -> bool:
    """True when x's served count stays within cap."""
    count = 0
    for y in intervals:
        if y.peer_id != x.peer_id and y.l <= x.r and y.c >= x.c:
            count += 1
    return count <= cap


@dataclass(frozen=True)
class Infeasible:
    blocking_lag: int


# ---------------------------------------------------------------------------
# Exhaustive optimizer for desk-scale instances. Ground truth for the
# greedy sweep; refuses anything big enough to be slow.

ORACLE_MAX_PEERS = 8
ORACLE_MAX_T = 20


def _greedy_incumbent(
    order: list[tuple[int, int]],
    constraints: OverlayConstraints,
) -> list[Interval] | None:
    """Cheap feasible assignment used only to seed the oracle's bound.

    Fills coverage deficits left to right with the cheapest single-peer
    extension that keeps every serving count within its cap. Returns
    None when the fill gets stuck; the exhaustive search then starts
    from an open bound.
    """
    k, T = constraints.k, constraints.T
    bounds = {pid: [c, c] for pid, c in order}
    pos = dict(order)

    def capacity_ok(tentative: dict[int, list[int]]) -> bool:
        for x, (lx, rx) in tentative.items():
            count = 0
            for y, (ly, ry) in tentative.items():
                if y != x and ly <= rx and pos[y] >= pos[x]:
                    count += 1
            if count > constraints.cap_of(x):
                return False
        return True

    for t in range(T + 1):
        while True:
            cover = sum(1 for lx, rx in bounds.values() if lx <= t <= rx)
            if cover >= k:
                break
            options = []
            for pid, (lx, rx) in bounds.items():
                if lx <= t <= rx:
                    continue
                cost = lx - t if t < lx else t - rx
                options.append((cost, pid))
            options.sort()
            placed = False
            for cost, pid in options:
                lx, rx = bounds[pid]
                new = [min(lx, t), max(rx, t)]
                tentative = {p: (b if p != pid else new) for p, b in bounds.items()}
                if capacity_ok(tentative):
                    bounds[pid] = new
                    placed = True
                    break
            if not placed:
                return None
    return [Interval(pid, lx, pos[pid], rx) for pid, (lx, rx) in bounds.items()]


def brute_force_oracle(
    positions: list[tuple[int, int]],
    constraints: OverlayConstraints,
    bound_grid: list[int] | None = None,
) -> int | Infeasible:
    """Minimal total buffer length over all integer bound assignments.

    Searches every assignment with l in [0, c] and r in [c, T] on the
    grid (values outside that box are dominated: they add length and
    serving charge without covering anything new in [0, T]). Branch
    and bound keeps it fast at this scale; the search stays exhaustive
    over the restricted grid.
    """
    n = len(positions)
    k, T = constraints.k, constraints.T
    if n > ORACLE_MAX_PEERS:
        raise ValueError(f"oracle handles at most {ORACLE_MAX_PEERS} peers, got {n}")
    if T > ORACLE_MAX_T:
        raise ValueError(f"oracle handles T up to {ORACLE_MAX_T}, got {T}")
    for pid, c in positions:
        if not isinstance(c, int) or not 0 <= c <= T:
            raise ValueError(f"peer {pid}: position {c} outside integer range [0, {T}]")
    if n < k:
        return Infeasible(blocking_lag=0)

    grid = sorted(set(bound_grid)) if bound_grid is not None else list(range(T + 1))
    order = sorted(positions, key=lambda p: (p[1], p[0]))
    cands: list[list[tuple[int, int, int]]] = []
    for pid, c in order:
        pairs = [
            (r - l, l, r)
            for l in grid
            if l <= c
            for r in grid
            if r >= c
        ]
        if not pairs:
            return Infeasible(blocking_lag=0)
        pairs.sort()
        cands.append(pairs)

    caps = [constraints.cap_of(pid) for pid, _ in order]
    cover = [0] * (T + 1)
    chosen: list[Interval] = []
    charges = [0] * n
    best_obj = math.inf
    best_found = False
    incumbent = _greedy_incumbent(order, constraints)
    if incumbent is not None:
        no_gaps = not coverage_gaps_fast(incumbent, k, T)
        no_overloads = not check_capacity(incumbent, constraints)
        if no_gaps and no_overloads:
            best_obj = objective(incumbent)
            best_found = True

    def deficit_bound(i: int) -> tuple[float, int, int]:
        """(lower bound on remaining cost, mandatory-cover lo, hi).

        The mandatory range is the span of lags whose deficit equals
        the number of unassigned peers: every one of them must cover
        the whole range or the branch is dead. (-1, -1) when empty.
        """
        remaining = n - i
        total = 0
        full_lo = full_hi = -1
        anchor = 0
        rem_pos = [c for _, c in order[i:]]
        for t in range(T + 1):
            need = k - cover[t]
            if need > remaining:
                return math.inf, -1, -1  # not enough peers left for lag t
            if need <= 0:
                continue
            total += need
            if need == remaining:
                if full_lo < 0:
                    full_lo = t
                full_hi = t
            # covering this lag costs each involved peer its distance to t;
            # the `need` cheapest peers give a valid bound for lag t alone
            dists = sorted(abs(c - t) for c in rem_pos)
            lag_cost = sum(dists[:need])
            if lag_cost > anchor:
                anchor = lag_cost
        # Each remaining peer covers at most (length + 1) lags, so total
        # deficit forces at least total - remaining extra length.
        lb = max(0, total - remaining, anchor)
        if full_lo >= 0:
            span = sum(
                max(full_hi, c) - min(full_lo, c) for c in rem_pos
            )
            lb = max(lb, span)
        return lb, full_lo, full_hi

    def dfs(i: int, obj: int) -> None:
        nonlocal best_obj, best_found
        lb, full_lo, full_hi = deficit_bound(i)
        if math.isinf(lb) or obj + lb >= best_obj:
            return
        if i == n:
            best_obj = obj
            best_found = True
            return
        pid, c = order[i]
        cap_i = caps[i]
        for cost, l, r in cands[i]:
            if obj + cost >= best_obj:
                break  # pairs sorted by cost; nothing cheaper follows
            if full_lo >= 0 and (l > full_lo or r < full_hi):
                continue  # this peer is needed across the mandatory range
            new_charge_i = 0
            ok = True
            for j, w in enumerate(chosen):
                # w was placed earlier, so w.c <= c (ties included via >=).
                if l <= w.r and c >= w.c:
                    if charges[j] + 1 > caps[j]:
                        ok = False
                        break
                if w.l <= r and w.c >= c:
                    new_charge_i += 1
            if not ok or new_charge_i > cap_i:
                continue
            iv = Interval(peer_id=pid, l=l, c=c, r=r)
            bumped = []
            for j, w in enumerate(chosen):
                if l <= w.r and c >= w.c:
                    charges[j] += 1
                    bumped.append(j)
            chosen.append(iv)
            charges[i] = new_charge_i
            for t in range(l, min(r, T) + 1):
                cover[t] += 1
            dfs(i + 1, obj + cost)
            for t in range(l, min(r, T) + 1):
                cover[t] -= 1
            chosen.pop()
            charges[i] = 0
            for j in bumped:
                charges[j] -= 1

    dfs(0, 0)
    if not best_found:
        return Infeasible(blocking_lag=0)
    return int(best_obj)


# ---------------------------------------------------------------------------
# Greedy bound assignment: one pass from the live edge toward the oldest
# protected lag.

def sweep_assign_bounds(
    positions: list[tuple[int, int]],
    constraints: OverlayConstraints,
) -> list[Interval] | Infeasible:
    """Assign every peer an interval around its position, greedily.

    Peers are taken freshest first (the caller supplies them sorted by
    (lag, peer id)). The k freshest anchor their fresh bound at lag 0 so
    coverage starts at the live edge; everyone else starts with the
    zero-length interval at its own position. The sweep then walks lags
    0..T and, wherever coverage falls short of k, applies the cheapest
    admissible single-peer extension: either a fresher peer keeps its
    old bound longer (r grows) or an older peer promises to fetch ahead
    (l shrinks). An extension is admissible when every serving count it
    touches stays within cap. Cost ties prefer growing r, since those
    chunks were already played and kept, then the lower peer id.

    Returns the intervals in input order, or Infeasible at the first
    lag where no admissible extension exists. Greedy, not optimal; the
    exhaustive oracle measures the gap on small instances.
    """
    n = len(positions)
    k, T = constraints.k, constraints.T
    if sorted(positions, key=lambda p: (p[1], p[0])) != list(positions):
        raise ValueError("positions must be sorted by (lag, peer id)")
    for pid, c in positions:
        if not isinstance(c, int) or c < 0:
            raise ValueError(f"peer {pid}: position must be a non-negative integer")
    if n < k:
        return Infeasible(blocking_lag=0)

    lag = {pid: c for pid, c in positions}
    left = {pid: c for pid, c in positions}
    right = {pid: c for pid, c in positions}
    for pid, _ in positions[:k]:
        left[pid] = 0

    def served_count(x: int, new_left: dict[int, int], new_right: dict[int, int]) -> int:
        return sum(
            1
            for y in lag
            if y != x and new_left[y] <= new_right[x] and lag[y] >= lag[x]
        )

    # Anchoring and same-position point overlaps are forced, so a cap
    # breach here is a genuine infeasibility, not a greedy dead end.
    for pid in lag:
        if served_count(pid, left, right) > constraints.cap_of(pid):
            return Infeasible(blocking_lag=0)

    def coverage(t: int) -> int:
        return sum(1 for pid in lag if left[pid] <= t <= right[pid])

    for t in range(T + 1):
        while coverage(t) < k:
            options = []
            for pid, c in positions:
                if left[pid] <= t <= right[pid]:
                    continue
                if c <= t and right[pid] < t:
                    options.append((t - right[pid], 0, pid, "r"))
                elif c >= t and left[pid] > t:
                    options.append((left[pid] - t, 1, pid, "l"))
            options.sort()
            applied = False
            for _cost, _pref, pid, side in options:
                if side == "r":
                    old = right[pid]
                    right[pid] = t
                    if served_count(pid, left, right) <= constraints.cap_of(pid):
                        applied = True
                        break
                    right[pid] = old
                else:
                    old = left[pid]
                    left[pid] = t
                    ok = True
                    for w in lag:
                        if w != pid and left[pid] <= right[w] and lag[pid] >= lag[w]:
                            if served_count(w, left, right) > constraints.cap_of(w):
                                ok = False
                                break
                    if ok:
                        applied = True
                        break
                    left[pid] = old
            if not applied:
                return Infeasible(blocking_lag=t)
    return [Interval(pid, left[pid], c, right[pid]) for pid, c in positions]


# ---------------------------------------------------------------------------
# Event-driven repair. Churn and VCR moves only ever extend surviving
# intervals here; a periodic full re-sweep (rebalance) is what shrinks
# them back once the population has settled.

@dataclass(frozen=True)
class OverlayEvent:
    kind: str  # "join" | "leave" | "move"
    peer_id: int
    lag: int | None = None  # join/move target


@dataclass
class RepairOutcome:
    changed: dict[int, Interval] = field(default_factory=dict)
    incidents: list[tuple[int, int]] = field(default_factory=list)


def _extend_to_cover(
    graph: IntervalGraph,
    constraints: OverlayConstraints,
    window_lo: int,
    window_hi: int,
    members: set[int],
) -> RepairOutcome:
    outcome = RepairOutcome()
    k = constraints.k
    window_lo = max(0, window_lo)
    window_hi = min(constraints.T, window_hi)

    def served_count(x: Interval, ivs: list[Interval]) -> int:
        return sum(1 for y in ivs if y.peer_id != x.peer_id and y.l <= x.r and y.c >= x.c)

    for t in range(window_lo, window_hi + 1):
        while True:
            ivs = graph.intervals()
            cover = sum(1 for iv in ivs if iv.covers(t))
            if cover >= k:
                break
            options = []
            for pid in sorted(members):
                iv = graph.vertices.get(pid)
                if iv is None or iv.covers(t):
                    continue
                if iv.c <= t and iv.r < t:
                    options.append((t - iv.r, 0, pid, "r"))
                elif iv.c >= t and iv.l > t:
                    options.append((iv.l - t, 1, pid, "l"))
            options.sort()
            applied = False
            for _cost, _pref, pid, side in options:
                iv = graph.vertices[pid]
                cand = replace(iv, r=t) if side == "r" else replace(iv, l=t)
                graph.add(cand)
                ivs = graph.intervals()
                ok = served_count(cand, ivs) <= constraints.cap_of(pid)
                if ok and side == "l":
                    for w in ivs:
                        if (
                            w.peer_id != pid
                            and cand.l <= w.r
                            and cand.c >= w.c
                            and served_count(w, ivs) > constraints.cap_of(w.peer_id)
                        ):
                            ok = False
                            break
                if ok:
                    outcome.changed[pid] = cand
                    applied = True
                    break
                graph.add(iv)  # roll back
            if not applied:
                outcome.incidents.append((t, cover))
                break
    return outcome


def _affected_members(graph: IntervalGraph, span_lo: int, span_hi: int,
                      extras: int = 3) -> set[int]:
    members = {
        iv.peer_id
        for iv in graph.intervals()
        if max(iv.l, span_lo) <= min(iv.r, span_hi)
    }
    center = (span_lo + span_hi) // 2
    outside = sorted(
        (abs(iv.c - center), iv.peer_id)
        for iv in graph.intervals()
        if iv.peer_id not in members
    )
    members.update(pid for _, pid in outside[:extras])
    return members


def repair_on_event(
    graph: IntervalGraph,
    constraints: OverlayConstraints,
    event: OverlayEvent,
) -> RepairOutcome:
    """Patch coverage around one membership or position change.

    The peers whose intervals touched the vacated range, plus a few
    gossip-discovered outsiders, greedily extend their bounds to close
    any deficit the event opened. Deficits nobody can close within
    capacity are returned as incidents rather than raised: they are the
    overlay's headline failure metric, not a programming error.
    """
    if event.kind == "join":
        if event.lag is None or event.lag < 0:
            raise ValueError("join needs a non-negative lag")
        graph.add(Interval(event.peer_id, event.lag, event.lag, event.lag))
        outcome = RepairOutcome()
        outcome.changed[event.peer_id] = graph.vertices[event.peer_id]
        return outcome
    if event.kind == "leave":
        departed = graph.vertices.get(event.peer_id)
        if departed is None:
            return RepairOutcome()
        graph.remove(event.peer_id)
        members = _affected_members(graph, departed.l, departed.r)
        return _extend_to_cover(graph, constraints, departed.l, departed.r, members)
    if event.kind == "move":
        if event.lag is None or event.lag < 0:
            raise ValueError("move needs a non-negative lag")
        old = graph.vertices.get(event.peer_id)
        graph.add(Interval(event.peer_id, event.lag, event.lag, event.lag))
        if old is None:
            return RepairOutcome()
        span_lo = min(old.l, event.lag)
        span_hi = max(old.r, event.lag)
        members = _affected_members(graph, span_lo, span_hi)
        members.add(event.peer_id)
        return _extend_to_cover(graph, constraints, span_lo, span_hi, members)
    raise ValueError(f"unknown overlay event kind {event.kind!r}")


def rebalance(
    graph: IntervalGraph,
    constraints: OverlayConstraints,
) -> RepairOutcome:
    """Re-run the sweep over the live population and adopt its bounds.

    Falls back to leaving intervals untouched (reporting any current
    gaps as incidents) when the sweep cannot place everyone, so a
    failed rebalance never costs coverage the overlay already had.
    """
    positions = sorted(
        ((iv.peer_id, iv.c) for iv in graph.intervals()),
        key=lambda p: (p[1], p[0]),
    )
    outcome = RepairOutcome()
    if not positions:
        if constraints.T >= 0:
            outcome.incidents.extend((t, 0) for t in range(constraints.T + 1))
        return outcome
    result = sweep_assign_bounds(positions, constraints)
    if isinstance(result, Infeasible):
        outcome.incidents.extend(coverage_gaps_fast(graph, constraints.k, constraints.T))
        return outcome
    for iv in result:
        if graph.vertices[iv.peer_id] != iv:
            graph.add(iv)
            outcome.changed[iv.peer_id] = iv
    return outcome
