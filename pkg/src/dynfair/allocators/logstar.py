"""Arrival-only weighted allocator with O(log* n) disruptions per job.

Jobs are packed into groups whose cumulative weights are powers of two
(relative to the first job's weight), each group is treated as one job of a
super-geometric instance, and a group's allocation is

    (1/12) / g(floor(g^-1(W_t / w_i)))    while w_i / W_t >= 1 / (12 * 2^i)
    1 / (12 * 2^i)                        afterwards (frozen)

Group allocations are passed on to member jobs in proportion to the weight
portion each job holds in the group.  The still-open last group is padded
with a fictitious weight up to W(G_{k-1}); the pad's slice is reserved and
never handed out.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ..core import Number, Q, ScaledShares
from .tower import TowerTable, floor_log2_ratio, g_floor_inverse

FLOOR = "floor"


@dataclass
class Group:
    index: int
    members: dict[int, Number] = field(default_factory=dict)   # job id -> weight portion
    closed: bool = False
    weight: Number = 0          # weight used for allocation (padded while open)
    alloc: Optional[Fraction] = None
    level: object = None        # tower level k, or FLOOR
    version: int = 0

    @property
    def real_weight(self) -> Number:
        return sum(self.members.values())


@dataclass
class GroupState:
    """Grouping of an arrival-only stream.

    ``cumulative[i]`` is W(G_i) for every closed group.  At most one group,
    the last one, is open.
    """

    groups: list[Group] = field(default_factory=list)
    cumulative: list[Number] = field(default_factory=list)
    unit: Number = 0
    job_groups: dict[int, list[int]] = field(default_factory=dict)

    @property
    def open_group(self) -> Optional[Group]:
        if self.groups and not self.groups[-1].closed:
            return self.groups[-1]
        return None

    @property
    def last_closed_total(self) -> Number:
        return self.cumulative[-1]

    def padded_total(self) -> Number:
        """W_t as the allocator sees it: 2 W(G_{k-1}) while a group is open."""
        if not self.groups:
            return 0
        if self.open_group is not None:
            return 2 * self.last_closed_total
        return self.last_closed_total

    def real_total(self) -> Number:
        if not self.groups:
            return 0
        extra = self.open_group.real_weight if self.open_group is not None else 0
        return self.last_closed_total + extra

    def pad(self) -> Number:
        g = self.open_group
        return g.weight - g.real_weight if g is not None else 0


@dataclass(frozen=True)
class GroupEvent:
    kind: str        # "open", "join", "close"
    group: int
    job_id: Optional[int] = None
    portion: Number = 0


def _join(state: GroupState, group: Group, job_id: int, portion: Number, events: list) -> None:
    group.members[job_id] = portion
    state.job_groups.setdefault(job_id, []).append(group.index)
    events.append(GroupEvent("join", group.index, job_id, portion))


def _open(state: GroupState, events: list) -> Group:
    g = Group(index=len(state.groups), weight=state.last_closed_total)
    state.groups.append(g)
    events.append(GroupEvent("open", g.index))
    return g


def logstar_group_ingest(state: GroupState, job_id: int, weight: Number) -> list[GroupEvent]:
    """Place an arriving job into one group or across two consecutive groups."""
    if weight <= 0:
        raise ValueError("weights must be positive")
    if job_id in state.job_groups:
        raise ValueError(f"job {job_id} already grouped")
    events: list[GroupEvent] = []
    if not state.groups:
        g0 = Group(index=0, closed=True, weight=weight)
        state.groups.append(g0)
        state.unit = weight
        state.cumulative.append(weight)
        events.append(GroupEvent("open", 0))
        _join(state, g0, job_id, weight, events)
        events.append(GroupEvent("close", 0))
        return events

    prev_total = state.last_closed_total
    before = state.real_total()
    if before + weight <= 2 * prev_total:
        g = state.open_group or _open(state, events)
        _join(state, g, job_id, weight, events)
        return events

    # straddle: fill the open group up to the next power of two, spill the rest
    top = state.unit * (1 << floor_log2_ratio(before + weight, state.unit))
    first = top - before
    rest = before + weight - top
    g = state.open_group
    if first > 0:
        g = g or _open(state, events)
        _join(state, g, job_id, first, events)
    assert g is not None, "a straddling job always reaches the open group"
    g.closed = True
    g.weight = top - prev_total
    state.cumulative.append(top)
    events.append(GroupEvent("close", g.index))
    if rest > 0:
        nxt = _open(state, events)
        _join(state, nxt, job_id, rest, events)
    return events


def _times_pow2(x: Number, k: int) -> Number:
    # a shift is much cheaper than a multiply on huge ints
    return x << k if type(x) is int else x * (1 << k)


class _Bound:
    """The integer ``mult * base << shift`` without materialising it.

    Trigger bounds are as large as the total weight times a tower value and
    many of them wait in the heap at once; they are compared by bit length
    first and only built when two bit lengths tie.
    """

    __slots__ = ("base", "mult", "shift", "bits")

    def __init__(self, base: int, shift: int, mult: int = 1):
        # ``base`` is shared with the group; only the small factors are owned here
        self.base, self.mult, self.shift = base, mult, shift
        self.bits = (mult * base).bit_length() + shift

    def cmp(self, other) -> int:
        if isinstance(other, _Bound):
            if self.bits != other.bits:
                return -1 if self.bits < other.bits else 1
            s = min(self.shift, other.shift)
            x = self.mult * self.base << (self.shift - s)
            y = other.mult * other.base << (other.shift - s)
        else:
            if type(other) is int and self.bits != other.bit_length():
                return -1 if self.bits < other.bit_length() else 1
            x, y = self.mult * self.base << self.shift, other
        return (x > y) - (x < y)

    def __lt__(self, other):
        return self.cmp(other) < 0

    def __gt__(self, other):
        return self.cmp(other) > 0

    def __eq__(self, other):
        return self.cmp(other) == 0

    __hash__ = None


def _bound(x: Number, k: int, mult: int = 1):
    return _Bound(x, k, mult) if type(x) is int else mult * x * (1 << k)


def _floor_active(index: int, weight: Number, total: Number) -> bool:
    """The floor branch: w_i / W_t < 1 / (12 * 2^i)."""
    return _times_pow2(12 * weight, index) < total


def logstar_allocate(table: TowerTable, index: int, weight: Number, total: Number) -> Fraction:
    """Allocation of group ``index`` with weight ``weight`` when the (padded) total is ``total``."""
    if not 0 < weight <= total:
        raise ValueError("need 0 < w_i <= W_t")
    if _floor_active(index, weight, total):
        return Q(1, 12 << index)
    k = g_floor_inverse(table, floor_log2_ratio(total, weight))
    return Q(1, 12 << table.log2_g(k))


def _level(table: TowerTable, index: int, weight: Number, total: Number):
    if _floor_active(index, weight, total):
        return FLOOR
    return g_floor_inverse(table, floor_log2_ratio(total, weight))


class LogStarAllocator:
    """Groups jobs and allocates to groups through the tower function.

    Only the numerators of the shares it receives are used, as weights; the
    guarantee is 24-approximation against ``numerator / total``.
    """

    supports_departures = False
    claimed_ratio = Fraction(24)

    def __init__(self, table: TowerTable | None = None):
        self.table = table or TowerTable()
        self.state = GroupState()
        self.allocations: dict[int, Fraction] = {}
        self._triggers: list = []
        self._tie = itertools.count()

    # -- triggers: total weight values at which a group's allocation may change

    def _push_triggers(self, g: Group) -> None:
        if g.level == FLOOR:
            return
        heap = self._triggers
        nxt = g.level + 1
        if nxt < self.table.k_cap:
            bound = _bound(g.weight, self.table.log2_g(nxt))
            heapq.heappush(heap, (bound, 0, next(self._tie), g.index, g.version))
        # the floor branch starts once 12 * 2^i * w_i < W_t
        heapq.heappush(heap, (_bound(g.weight, g.index, 12), 1, next(self._tie), g.index, g.version))

    def _refresh(self, g: Group, total: Number) -> bool:
        level = _level(self.table, g.index, g.weight, total)
        alloc = (Q(1, 12 << g.index) if level == FLOOR
                 else Q(1, 12 << self.table.log2_g(level)))
        changed = alloc != g.alloc
        g.alloc, g.level = alloc, level
        g.version += 1
        self._push_triggers(g)
        return changed

    def _job_allocation(self, job_id: int) -> Fraction:
        groups = self.state.job_groups[job_id]
        if len(groups) == 1:
            g = self.state.groups[groups[0]]
            if g.members[job_id] == g.weight:
                # sole owner of its group: share the group's value instead of a copy
                return g.alloc
        total = Q(0)
        for gi in groups:
            g = self.state.groups[gi]
            # alloc * portion / weight as one Fraction: a single gcd on large values
            a, p, w = g.alloc, g.members[job_id], g.weight
            total += Q(a.numerator * p.numerator * w.denominator,
                              a.denominator * p.denominator * w.numerator)
        return total

    @property
    def reserved(self) -> Fraction:
        """Slice of the open group's allocation that belongs to the fictitious pad."""
        g = self.state.open_group
        if g is None or g.alloc is None:
            return Q(0)
        return g.alloc * self.state.pad() / g.weight

    def group_allocations(self) -> dict[int, Fraction]:
        return {g.index: g.alloc for g in self.state.groups}

    def on_arrival(self, job_id: int, shares: ScaledShares) -> dict[int, Fraction]:
        weight = shares.numerators[job_id]
        events = logstar_group_ingest(self.state, job_id, weight)
        total = self.state.padded_total()
        dirty_groups = set()
        for ev in events:
            if ev.kind in ("open", "close"):
                dirty_groups.add(ev.group)
        # opened or closed groups always pass their allocation on again: a
        # closing group's weight changes even when its allocation does not
        touched = set()
        for gi in sorted(dirty_groups):
            self._refresh(self.state.groups[gi], total)
            touched.add(gi)
        heap = self._triggers
        while heap:
            bound, strict, _, gi, version = heap[0]
            if total < bound or (strict and total == bound):
                break
            heapq.heappop(heap)
            g = self.state.groups[gi]
            if version != g.version:
                continue
            if self._refresh(g, total):
                touched.add(gi)
        jobs = {job_id}
        for gi in touched:
            jobs.update(self.state.groups[gi].members)
        out = {}
        for j in jobs:
            a = self._job_allocation(j)
            if self.allocations.get(j) != a:
                self.allocations[j] = a
                out[j] = a
        return out

    def on_departure(self, job_id: int, shares: ScaledShares) -> dict[int, Fraction]:
        raise NotImplementedError("the LogStar allocator handles arrival-only streams")

    def on_share_update(self, shares: ScaledShares) -> dict[int, Fraction]:
        return {}
