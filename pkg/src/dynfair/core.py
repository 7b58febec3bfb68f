"""Exact numeric types, jobs, events, snapshots and the allocator/policy contracts.

All allocation values are :class:`fractions.Fraction`; weights are positive
Python ints.  Nothing in the simulation path touches floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numbers
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Protocol, Sequence, Union

try:
    # GMP rationals: same exact semantics as Fraction (equal values compare and hash equal)
    # but far faster on the multi-thousand-bit values the geometric instances produce
    from gmpy2 import mpq as Q
except ImportError:  # pragma: no cover
    Q = Fraction

Frac = Fraction
Number = Union[int, Fraction]


class InvalidEventStream(ValueError):
    """Raised by :func:`validate_event_stream` with the first violation found."""

    def __init__(self, index: int, reason: str):
        super().__init__(f"event {index}: {reason}")
        self.index = index
        self.reason = reason


def as_frac(value) -> Fraction:
    """Parse an int, Fraction or ``"p/q"`` string exactly.

    Floats are rejected: a float has already lost the value we want.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, numbers.Rational) and not isinstance(value, int):
        return Fraction(int(value.numerator), int(value.denominator))
    if isinstance(value, bool) or isinstance(value, float):
        raise TypeError(f"refusing inexact value {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as a rational")


def frac_sum(values: Iterable[Number]) -> Fraction:
    total = Fraction(0)
    for v in values:
        total += v
    return total


def scale_to_integers(values: Sequence[Number]) -> list[int]:
    """Scale rational weights by the LCM of their denominators."""
    fracs = [as_frac(v) for v in values]
    lcm = 1
    for f in fracs:
        lcm = lcm * f.denominator // math.gcd(lcm, f.denominator)
    return [int(f * lcm) for f in fracs]


@dataclass(frozen=True)
class Job:
    id: int
    weight: int = 1
    arrival_index: int = 0
    departure_index: Optional[int] = None
    demands: Optional[tuple[Fraction, ...]] = None

    def __post_init__(self):
        if isinstance(self.weight, bool) or not isinstance(self.weight, int):
            raise TypeError(f"job {self.id}: weight must be an int, got {self.weight!r}")
        if self.weight < 1:
            raise ValueError(f"job {self.id}: weight must be >= 1")
        if self.departure_index is not None and self.departure_index <= self.arrival_index:
            raise ValueError(f"job {self.id}: departs before it arrives")
        if self.demands is not None:
            object.__setattr__(self, "demands", tuple(as_frac(d) for d in self.demands))


@dataclass(frozen=True)
class Arrival:
    time: int
    job: Job

    @property
    def job_id(self) -> int:
        return self.job.id


@dataclass(frozen=True)
class Departure:
    time: int
    job_id: int


Event = Union[Arrival, Departure]


def validate_event_stream(events: Sequence[Event]) -> None:
    """Raise :class:`InvalidEventStream` at the first bad event, else return None."""
    alive: set[int] = set()
    seen: set[int] = set()
    last_time = None
    for i, ev in enumerate(events):
        if last_time is not None and ev.time < last_time:
            raise InvalidEventStream(i, "time regression")
        last_time = ev.time
        if isinstance(ev, Arrival):
            if ev.job.id in seen:
                raise InvalidEventStream(i, f"duplicate id {ev.job.id}")
            seen.add(ev.job.id)
            alive.add(ev.job.id)
        elif isinstance(ev, Departure):
            if ev.job_id not in alive:
                raise InvalidEventStream(i, "dangling departure")
            alive.remove(ev.job_id)
        else:
            raise InvalidEventStream(i, f"unknown event {ev!r}")


def is_arrival_only(events: Iterable[Event]) -> bool:
    return all(isinstance(ev, Arrival) for ev in events)


def group_by_time(events: Iterable[Event]):
    """Yield ``(time, [events])`` batches in stream order."""
    batch: list[Event] = []
    current = None
    for ev in events:
        if batch and ev.time != current:
            yield current, batch
            batch = []
        current = ev.time
        batch.append(ev)
    if batch:
        yield current, batch


@dataclass
class ScaledShares:
    """Fair shares of one resource dimension, ``share(j) = numerators[j] * scale``.

    Every policy here has this shape: per-job numerators that only change on
    the job's own arrival (or an adversary update) and one global scale.
    ``total`` is the exact sum of numerators over alive jobs.  ``changed``
    lists ids whose numerator was set or changed since the previous call.
    """

    numerators: Mapping[int, Number]
    scale: Fraction
    total: Number
    changed: frozenset = frozenset()

    def __getitem__(self, job_id: int) -> Fraction:
        n = self.numerators[job_id]
        if type(n) is int:
            # skips Fraction's operator dispatch, which dominates large runs
            return Q(n * self.scale.numerator, self.scale.denominator)
        return n * self.scale

    def values(self, ids: Iterable[int]) -> dict[int, Fraction]:
        """Shares for ``ids`` in one pass."""
        nums, s = self.numerators, self.scale
        sn, sd = s.numerator, s.denominator
        return {j: Q(n * sn, sd) if type(n) is int else n * s
                for j in ids for n in (nums[j],)}

    def __contains__(self, job_id: int) -> bool:
        return job_id in self.numerators

    def __len__(self) -> int:
        return len(self.numerators)

    def as_dict(self) -> dict[int, Fraction]:
        return {j: n * Q(self.scale) for j, n in self.numerators.items()}


@dataclass
class AllocationSnapshot:
    time: int
    entries: dict[int, tuple[Fraction, Fraction]] = field(default_factory=dict)

    def total_allocation(self) -> Fraction:
        return frac_sum(a for a, _ in self.entries.values())

    def worst_ratio(self) -> Fraction:
        """max over entries of share / allocation, 1 when empty."""
        worst = Fraction(1)
        for a, s in self.entries.values():
            if a <= 0:
                raise ZeroDivisionError("non-positive allocation")
            worst = max(worst, s / a)
        return worst


@dataclass
class DisruptionLedger:
    per_job: dict[int, list[int]] = field(default_factory=dict)

    def record(self, job_id: int, time: int) -> None:
        self.per_job.setdefault(job_id, []).append(time)

    def register(self, job_id: int) -> None:
        self.per_job.setdefault(job_id, [])

    @property
    def total(self) -> int:
        return sum(len(v) for v in self.per_job.values())

    def counts(self) -> dict[int, int]:
        return {j: len(v) for j, v in self.per_job.items()}

    def max_per_job(self) -> int:
        return max((len(v) for v in self.per_job.values()), default=0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DisruptionLedger):
            return NotImplemented
        mine = {j: v for j, v in self.per_job.items() if v}
        theirs = {j: v for j, v in other.per_job.items() if v}
        return mine == theirs


class Policy(Protocol):
    """Fair-share policy maintained incrementally over alive jobs."""

    dims: int

    def arrive(self, job: Job) -> None: ...

    def depart(self, job_id: int) -> None: ...

    def shares(self) -> list[ScaledShares]: ...

    def fair_shares(self, jobs: Sequence[Job], time: int | None = None) -> list[dict[int, Fraction]]: ...


class Allocator(Protocol):
    """One-dimensional allocator.

    Each hook returns only the entries whose allocation it set during the
    call (the new job included); the full map is ``allocations``.
    """

    claimed_ratio: Fraction
    supports_departures: bool
    allocations: dict[int, Fraction]

    def on_arrival(self, job_id: int, shares: ScaledShares) -> dict[int, Fraction]: ...

    def on_departure(self, job_id: int, shares: ScaledShares) -> dict[int, Fraction]: ...

    def on_share_update(self, shares: ScaledShares) -> dict[int, Fraction]: ...
