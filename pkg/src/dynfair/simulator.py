"""Event loop, per-step invariant checks, traces and run metrics.

The referee (:class:`Tracker`) never recomputes every share at every step.
Shares have the form ``numerator_j * scale``, so the worst ratio
share/allocation at a step is ``scale * max_j numerator_j / allocation_j``;
the max is kept in a lazy heap that is only touched for jobs whose
numerator or allocation moved.  The result is exact, not sampled.
"""

from __future__ import annotations

import heapq
import math
import statistics
import time as _time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .allocators import (ExactAllocator, LightHeavyAllocator, LogStarAllocator,
                         PerDimension, ThresholdResetAllocator)
from .core import (AllocationSnapshot, Arrival, Departure, DisruptionLedger, Event, Q,
                   ScaledShares, as_frac, group_by_time, is_arrival_only,
                   validate_event_stream)
from .policies import make_policy


class InvariantViolation(RuntimeError):
    def __init__(self, time: int, reason: str):
        super().__init__(f"t={time}: {reason}")
        self.time = time
        self.reason = reason
        self.result = None


class UnsupportedCombination(ValueError):
    pass


def log_star(n: int) -> int:
    """Number of times log2 must be applied to n before the value is <= 1."""
    if n < 1:
        raise ValueError("log_star needs n >= 1")
    count = 0
    x = n
    while x > 1:
        x = math.log2(x)
        count += 1
    return count


@dataclass
class TraceStep:
    time: int
    arrivals: list[int] = field(default_factory=list)
    departures: list[int] = field(default_factory=list)
    changes: list[dict[int, Fraction]] = field(default_factory=list)       # per dimension
    snapshots: Optional[list[AllocationSnapshot]] = None                   # per dimension, "full" only


class _Key:
    """Heap entry for the ratio numerator/allocation; the heap top is the largest.

    Holds references to the share numerator and the allocation rather than
    their cross products, which on geometric instances are as large as the
    total weight and would otherwise be copied once per key.
    """

    __slots__ = ("n", "a", "job", "version", "lg")

    def __init__(self, n, a, job: int, version: int):
        self.n, self.a, self.job, self.version = n, a, job, version
        self.lg = _log2(n) - _log2(a)

    @property
    def p(self) -> int:
        return self.n.numerator * self.a.denominator

    @property
    def q(self) -> int:
        return self.n.denominator * self.a.numerator

    def __lt__(self, other: "_Key") -> bool:
        # the float estimate decides unless the two ratios are nearly equal
        d = self.lg - other.lg
        if d > 1e-6:
            return True
        if d < -1e-6:
            return False
        return self.p * other.q > other.p * self.q


def _log2_int(x) -> float:
    s = max(x.bit_length() - 60, 0)
    return math.log2(int(x >> s)) + s


def _log2(x) -> float:
    """log2 of a positive int or rational to about 1e-9 absolute, at any size."""
    if type(x) is int:
        return _log2_int(x)
    return _log2_int(x.numerator) - _log2_int(x.denominator)


class Tracker:
    """Referee and bookkeeper for one run.

    Call ``begin_step``, then ``arrive``/``depart``/``apply``/``note_shares`` for
    each event of the step, then ``end_step``.  Disruptions are counted at step
    granularity: a job present before the step whose allocation differs at the
    end of the step in any dimension.
    """

    def __init__(self, dims: int, claimed_ratio: Fraction, strict: bool = True,
                 trace: str = "none"):
        if trace not in ("none", "delta", "full"):
            raise ValueError(f"unknown trace level {trace!r}")
        self.dims = dims
        self.claimed_ratio = as_frac(claimed_ratio)
        self.strict = strict
        self.trace_level = trace
        self.alloc: list[dict[int, Fraction]] = [{} for _ in range(dims)]
        self.sums = [Q(0)] * dims
        self.ledger = DisruptionLedger()
        self.dim_disruptions = [0] * dims
        self.trace: list[TraceStep] = []
        self.worst_ratio: Optional[Fraction] = None
        self.feasibility_violations = 0
        self.approximation_violations = 0
        self.first_violation: Optional[tuple[int, str]] = None
        self.max_total = [Q(0)] * dims
        self.arrivals = 0
        self.departures = 0
        self.events = 0
        self.steps = 0
        self._heaps: list[list] = [[] for _ in range(dims)]
        self._version: list[dict[int, int]] = [{} for _ in range(dims)]
        self._heapified = [True] * dims
        self._time = None

    # -- per step

    def begin_step(self, time: int) -> None:
        self._time = time
        self._old: dict[int, tuple] = {}
        self._new: set[int] = set()
        self._touched: list[set[int]] = [set() for _ in range(self.dims)]
        self._buckets: list[dict[int, int]] = [{} for _ in range(self.dims)]
        self._step = TraceStep(time, changes=[{} for _ in range(self.dims)])

    def arrive(self, job_id: int) -> None:
        self._new.add(job_id)
        self.ledger.register(job_id)
        self.arrivals += 1
        self.events += 1
        self._step.arrivals.append(job_id)

    def depart(self, job_id: int) -> None:
        for d in range(self.dims):
            a = self.alloc[d].pop(job_id, None)
            if a is not None:
                buckets = self._buckets[d]
                buckets[a.denominator] = buckets.get(a.denominator, 0) - a.numerator
            self._version[d].pop(job_id, None)
            self._touched[d].discard(job_id)
            self._step.changes[d].pop(job_id, None)
        self._old.pop(job_id, None)
        self._new.discard(job_id)
        self.departures += 1
        self.events += 1
        self._step.departures.append(job_id)

    def apply(self, changes: Sequence[dict[int, Fraction]]) -> None:
        for d, delta in enumerate(changes):
            cur = self.alloc[d]
            # sum the step's delta as integers per denominator; one Fraction add per bucket later
            buckets = self._buckets[d]
            old, new = self._old, self._new
            one_dim = self.dims == 1
            for j, a in delta.items():
                prev = cur.get(j)
                if j not in new and j not in old:
                    old[j] = (prev,) if one_dim else tuple(self.alloc[e].get(j) for e in range(self.dims))
                if prev is not None:
                    den = prev.denominator
                    buckets[den] = buckets.get(den, 0) - prev.numerator
                den = a.denominator
                buckets[den] = buckets.get(den, 0) + a.numerator
            cur.update(delta)
            self._touched[d].update(delta)
            if self.trace_level != "none":
                self._step.changes[d].update(delta)

    def _flush_sums(self) -> None:
        for d, buckets in enumerate(self._buckets):
            if buckets:
                for den, num in buckets.items():
                    if num:
                        self.sums[d] += Q(num, den)
                buckets.clear()

    def note_shares(self, shares: Sequence[ScaledShares]) -> None:
        for d, s in enumerate(shares):
            self._touched[d].update(j for j in s.changed if j in s.numerators)

    def _violation(self, kind: str, reason: str) -> None:
        if kind == "feasibility":
            self.feasibility_violations += 1
        else:
            self.approximation_violations += 1
        if self.first_violation is None:
            self.first_violation = (self._time, reason)
        if self.strict:
            raise InvariantViolation(self._time, reason)

    def end_step(self, shares: Sequence[ScaledShares], check: bool = True) -> set[int]:
        """Close the step; returns the ids disrupted during it."""
        self.steps += 1
        disrupted = set()
        self._flush_sums()
        for j, old in self._old.items():
            moved = [d for d in range(self.dims) if not _same(self.alloc[d].get(j), old[d])]
            if moved:
                disrupted.add(j)
                self.ledger.record(j, self._time)
                for d in moved:
                    self.dim_disruptions[d] += 1
        if check:
            self._check(shares)
        if self.trace_level != "none":
            if self.trace_level == "full":
                self._step.snapshots = [
                    AllocationSnapshot(self._time, {j: (self.alloc[d].get(j), s[j]) for j in s.numerators})
                    for d, s in enumerate(shares)]
            self.trace.append(self._step)
        return disrupted

    def _check(self, shares: Sequence[ScaledShares]) -> None:
        for d, s in enumerate(shares):
            if self.sums[d] > self.max_total[d]:
                self.max_total[d] = self.sums[d]
            if self.sums[d] > 1:
                self._violation("feasibility", f"dimension {d}: total allocation {self.sums[d]} > 1")
            heap, version, alloc = self._heaps[d], self._version[d], self.alloc[d]
            nums = s.numerators
            stamp = self.steps
            fresh = []
            for j in self._touched[d] | self._new:
                if j not in nums:
                    continue
                a = alloc.get(j)
                if a is None or a.numerator <= 0:
                    self._violation("approximation", f"job {j} has no positive allocation in dimension {d}")
                    continue
                version[j] = stamp
                fresh.append(_Key(nums[j], a, j, stamp))
            if len(fresh) == len(version):
                # every key moved: keep them unordered until a partial update needs the heap
                if not fresh:
                    continue
                self._heaps[d], self._heapified[d] = fresh, False
                top = min(fresh)
            else:
                if not self._heapified[d] or len(heap) > 2 * len(version) + 64:
                    heap = [k for k in heap if version.get(k.job) == k.version]
                    heapq.heapify(heap)
                    self._heaps[d], self._heapified[d] = heap, True
                for key in fresh:
                    heapq.heappush(heap, key)
                while heap and version.get(heap[0].job) != heap[0].version:
                    heapq.heappop(heap)
                if not heap:
                    continue
                top = heap[0]
            # step ratio = p*sn / (q*sd); compare by cross-multiplication, build a Fraction only when needed
            rp, rq = top.p * s.scale.numerator, top.q * s.scale.denominator
            w = self.worst_ratio
            if w is None or rp * w.denominator > w.numerator * rq:
                self.worst_ratio = Q(rp, rq)
            c = self.claimed_ratio
            if rp * c.denominator > c.numerator * rq:
                self._violation("approximation",
                                f"job {top.job} dimension {d}: share/allocation {Q(rp, rq)} > {c}")


def _same(a: Optional[Fraction], b: Optional[Fraction]) -> bool:
    # Fraction.__eq__ goes through ABC checks; both sides are normalized Fractions here
    if a is b:
        return True
    if a is None or b is None:
        return False
    return a.numerator == b.numerator and a.denominator == b.denominator


def ledger_from_trace(trace: Sequence[TraceStep]) -> DisruptionLedger:
    """Rebuild the ledger from full snapshots alone (jobs alive at t-1 and t whose allocation differs)."""
    ledger = DisruptionLedger()
    prev: Optional[list[AllocationSnapshot]] = None
    for step in trace:
        if step.snapshots is None:
            raise ValueError("ledger_from_trace needs a full trace")
        for snap in step.snapshots:
            for j in snap.entries:
                ledger.register(j)
        if prev is not None:
            for j in step.snapshots[0].entries:
                if all(j in p.entries for p in prev):
                    if any(s.entries[j][0] != p.entries[j][0] for s, p in zip(step.snapshots, prev)):
                        ledger.record(j, step.time)
        prev = step.snapshots
    return ledger


# ---------------------------------------------------------------------------
# reports

@dataclass
class RunReport:
    total_disruptions: int
    per_job_min: int
    per_job_mean: Fraction
    per_job_max: int
    histogram: dict[int, int]
    per_dimension_disruptions: list[int]
    worst_ratio: Optional[Fraction]
    claimed_ratio: Fraction
    feasibility_violations: int
    approximation_violations: int
    first_violation: Optional[tuple[int, str]]
    arrivals: int
    departures: int
    events: int
    steps: int
    max_total_allocation: list[Fraction]
    wall_time: float = 0.0
    aborted: bool = False

    @property
    def feasible(self) -> bool:
        return self.feasibility_violations == 0

    @property
    def clean(self) -> bool:
        return self.feasibility_violations == 0 and self.approximation_violations == 0 and not self.aborted

    @property
    def mean_per_event(self) -> Fraction:
        return Fraction(self.total_disruptions, self.events) if self.events else Fraction(0)

    @classmethod
    def from_tracker(cls, tr: Tracker, wall_time: float = 0.0, aborted: bool = False) -> "RunReport":
        counts = tr.ledger.counts()
        values = list(counts.values())
        return cls(
            total_disruptions=tr.ledger.total,
            per_job_min=min(values, default=0),
            per_job_mean=Fraction(sum(values), len(values)) if values else Fraction(0),
            per_job_max=max(values, default=0),
            histogram=dict(sorted(Counter(values).items())),
            per_dimension_disruptions=list(tr.dim_disruptions),
            worst_ratio=tr.worst_ratio,
            claimed_ratio=tr.claimed_ratio,
            feasibility_violations=tr.feasibility_violations,
            approximation_violations=tr.approximation_violations,
            first_violation=tr.first_violation,
            arrivals=tr.arrivals,
            departures=tr.departures,
            events=tr.events,
            steps=tr.steps,
            max_total_allocation=list(tr.max_total),
            wall_time=wall_time,
            aborted=aborted,
        )


@dataclass
class SimulationResult:
    trace: list[TraceStep]
    ledger: DisruptionLedger
    report: RunReport
    allocator: object = None


def simulate(events: Sequence[Event], policy, allocator, *, strict: bool = True,
             trace: str = "none", check: bool = True, claimed_ratio=None) -> SimulationResult:
    """Drive ``allocator`` over ``events`` under ``policy``.

    ``allocator`` is a :class:`PerDimension` or a one-dimensional allocator
    (wrapped automatically).  With ``strict`` the first invariant violation
    raises :class:`InvariantViolation`; otherwise it is counted.
    """
    events = list(events)
    validate_event_stream(events)
    if not isinstance(allocator, PerDimension):
        allocator = PerDimension([allocator])
    if allocator.dims != policy.dims:
        raise UnsupportedCombination(f"policy has {policy.dims} dimensions, allocator {allocator.dims}")
    if not allocator.supports_departures and not is_arrival_only(events):
        raise UnsupportedCombination("allocator handles arrival-only streams but the instance has departures")
    ratio = allocator.claimed_ratio if claimed_ratio is None else as_frac(claimed_ratio)
    tracker = Tracker(policy.dims, ratio, strict=strict, trace=trace)
    start = _time.perf_counter()
    try:
        for t, batch in group_by_time(events):
            tracker.begin_step(t)
            for ev in batch:
                if isinstance(ev, Arrival):
                    policy.arrive(ev.job)
                    shares = policy.shares()
                    tracker.arrive(ev.job.id)
                    tracker.note_shares(shares)
                    tracker.apply(allocator.on_arrival(ev.job.id, shares))
                else:
                    policy.depart(ev.job_id)
                    shares = policy.shares()
                    tracker.depart(ev.job_id)
                    tracker.note_shares(shares)
                    tracker.apply(allocator.on_departure(ev.job_id, shares))
            tracker.end_step(shares, check=check)
    except InvariantViolation as exc:
        # halt mode: hand the partial run to whoever reports it
        report = RunReport.from_tracker(tracker, _time.perf_counter() - start, aborted=True)
        exc.result = SimulationResult(tracker.trace, tracker.ledger, report, allocator)
        raise
    report = RunReport.from_tracker(tracker, _time.perf_counter() - start)
    return SimulationResult(tracker.trace, tracker.ledger, report, allocator)


# ---------------------------------------------------------------------------
# configured runs

ALLOCATORS = ("exact", "logstar", "threshold", "lightheavy")


@dataclass
class RunConfig:
    """Everything needed to reproduce one run.

    ``instance`` is an event list, a path to a JSONL instance, or an inline
    generator spec such as ``"geometric:1000"`` (see :func:`dynfair.io.resolve_instance`).
    """

    allocator: str = "exact"
    policy: str = "weighted"
    instance: Union[str, list, None] = None
    epsilon: Optional[Fraction] = None
    n: Optional[int] = None
    doubling: bool = False
    seed: Optional[int] = None
    strict: bool = True
    trace: str = "none"

    def describe(self) -> dict:
        inst = self.instance if isinstance(self.instance, str) else f"<{len(self.instance or [])} events>"
        return {
            "allocator": self.allocator, "policy": self.policy, "instance": inst,
            "epsilon": None if self.epsilon is None else str(self.epsilon),
            "n": self.n, "doubling": self.doubling, "seed": self.seed,
            "strict": self.strict,
        }


def make_allocator(name: str, dims: int, *, seed=None, epsilon=None, n=None, doubling=False) -> PerDimension:
    if name == "exact":
        return PerDimension([ExactAllocator() for _ in range(dims)])
    if name == "logstar":
        return PerDimension([LogStarAllocator() for _ in range(dims)])
    if name == "threshold":
        seeds = np.random.SeedSequence([0 if seed is None else seed, 1]).spawn(dims)
        return PerDimension([ThresholdResetAllocator(np.random.default_rng(s)) for s in seeds])
    if name == "lightheavy":
        eps = Fraction(1) if epsilon is None else as_frac(epsilon)
        return PerDimension([LightHeavyAllocator(eps, n=n, doubling=doubling) for _ in range(dims)])
    raise ValueError(f"unknown allocator {name!r}; choose from {', '.join(ALLOCATORS)}")


def _dims_of(events) -> int:
    for ev in events:
        if isinstance(ev, Arrival):
            return len(ev.job.demands) if ev.job.demands is not None else 1
    return 1


def prepare(config: RunConfig):
    """Resolve a config into (events, policy, allocator); raises UnsupportedCombination early."""
    from .io import resolve_instance

    events = resolve_instance(config.instance, config.seed) if not isinstance(config.instance, list) else config.instance
    validate_event_stream(events)
    arrival_only = is_arrival_only(events)
    if config.allocator in ("logstar", "lightheavy") and not arrival_only:
        raise UnsupportedCombination(f"{config.allocator} requires an arrival-only instance")
    dims = 1 if config.policy == "weighted" else _dims_of(events)
    policy = make_policy(config.policy, dims)
    n = config.n
    if config.allocator == "lightheavy" and n is None and not config.doubling:
        n = sum(1 for ev in events if isinstance(ev, Arrival))
    allocator = make_allocator(config.allocator, dims, seed=config.seed, epsilon=config.epsilon,
                               n=n, doubling=config.doubling)
    return events, policy, allocator


def run(config: RunConfig) -> SimulationResult:
    """Resolve and simulate ``config``.

    In strict mode an invariant violation raises :class:`InvariantViolation`
    whose ``result`` attribute holds the partial run.
    """
    events, policy, allocator = prepare(config)
    return simulate(events, policy, allocator, strict=config.strict, trace=config.trace)


# ---------------------------------------------------------------------------
# sweeps

SWEEP_COLUMNS = ("config_id", "seed", "n", "arrivals", "departures", "total_disruptions",
                 "max_per_job", "mean_per_event", "worst_ratio_decimal", "feasible")


def derive_seeds(master_seed: int, n_configs: int, trials: int) -> list[list[int]]:
    children = np.random.SeedSequence(master_seed).spawn(n_configs)
    return [[int(s) for s in child.generate_state(trials, dtype=np.uint64)] for child in children]


def _sweep_row(args):
    config_id, config = args
    try:
        result = run(config)
        rep = result.report
        failed = None
    except Exception as exc:  # a failing run is recorded, the sweep continues
        rep = None
        failed = f"{type(exc).__name__}: {exc}"
    if rep is None:
        return {"config_id": config_id, "seed": config.seed, "n": 0, "arrivals": 0, "departures": 0,
                "total_disruptions": 0, "max_per_job": 0, "mean_per_event": "nan",
                "worst_ratio_decimal": "nan", "feasible": 0, "error": failed}
    return {
        "config_id": config_id,
        "seed": config.seed,
        "n": rep.arrivals,
        "arrivals": rep.arrivals,
        "departures": rep.departures,
        "total_disruptions": rep.total_disruptions,
        "max_per_job": rep.per_job_max,
        "mean_per_event": decimal(rep.mean_per_event),
        "worst_ratio_decimal": decimal(rep.worst_ratio),
        "feasible": int(rep.clean),
        "error": None,
    }


@dataclass
class SweepSummary:
    config_id: int
    trials: int
    failures: int
    mean_per_event: float
    std_per_event: float
    ci95_per_event: tuple[float, float]
    mean_per_job: float
    std_per_job: float
    max_per_job: int


def sweep(configs: Sequence[RunConfig], trials: int = 1, master_seed: int = 0,
          workers: int = 1) -> tuple[list[dict], list[SweepSummary]]:
    """Run every config ``trials`` times with seeds derived from ``master_seed``.

    Configs keep their own seed when ``trials == 1`` and one is set.
    """
    seeds = derive_seeds(master_seed, len(configs), trials)
    jobs = []
    for cid, cfg in enumerate(configs):
        for k in range(trials):
            seed = cfg.seed if (trials == 1 and cfg.seed is not None) else seeds[cid][k]
            jobs.append((cid, replace(cfg, seed=seed, strict=False)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    summaries = []
    for cid in range(len(configs)):
        mine = [r for r in rows if r["config_id"] == cid and r["error"] is None]
        per_event = [float(r["mean_per_event"]) for r in mine]
        per_job = [r["total_disruptions"] / r["arrivals"] for r in mine if r["arrivals"]]
        m = statistics.fmean(per_event) if per_event else float("nan")
        sd = statistics.stdev(per_event) if len(per_event) > 1 else 0.0
        half = 1.96 * sd / math.sqrt(len(per_event)) if per_event else float("nan")
        summaries.append(SweepSummary(
            config_id=cid, trials=trials, failures=trials - len(mine),
            mean_per_event=m, std_per_event=sd, ci95_per_event=(m - half, m + half),
            mean_per_job=statistics.fmean(per_job) if per_job else float("nan"),
            std_per_job=statistics.stdev(per_job) if len(per_job) > 1 else 0.0,
            max_per_job=max((r["max_per_job"] for r in mine), default=0),
        ))
    return rows, summaries


def decimal(x: Optional[Fraction], digits: int = 12) -> str:
    """Render an exact rational with ``digits`` significant digits (presentation only)."""
    if x is None:
        return "nan"
    x = as_frac(x)
    if x == 0:
        return "0"
    sign = "-" if x < 0 else ""
    x = abs(x)
    # scale to an integer with `digits` significant digits, exactly
    exp = len(str(x.numerator)) - len(str(x.denominator))
    shift = digits - exp
    scaled = x * Fraction(10) ** shift
    q = scaled.numerator // scaled.denominator
    r = scaled - q
    if r * 2 >= 1:
        q += 1
    s = str(q)
    if len(s) > digits:
        s = s[:digits]
        shift -= 1
    point = len(s) - shift
    if point <= 0:
        text = "0." + "0" * (-point) + s
    elif point >= len(s):
        text = s + "0" * (point - len(s))
    else:
        text = s[:point] + "." + s[point:]
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    if abs(point) > 20:
        return f"{sign}{s[0]}.{s[1:].rstrip('0') or '0'}e{point - 1}"
    return sign + text
