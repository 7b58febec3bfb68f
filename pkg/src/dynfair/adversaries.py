"""Instance generators and the adaptive lower-bound adversaries.

The adversaries see only the allocation maps an opponent returns, never its
internals.  A referee (:class:`~dynfair.simulator.Tracker`) certifies every
step; a violation ends the game as an opponent loss.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .allocators import PerDimension
from .core import Arrival, Departure, DisruptionLedger, Event, Job, as_frac
from .policies import (CertificationFailure, MonotoneAdversaryState, WeightedPolicy,
                       monotone_adversary_step)
from .simulator import InvariantViolation, RunReport, Tracker

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# static generators

def geometric_instance(n: int) -> list[Event]:
    """Job i arrives at time i with weight 2^(i-1)."""
    if n < 1:
        raise ValueError("geometric instance needs n >= 1")
    return [Arrival(i, Job(i, 1 << (i - 1), arrival_index=i)) for i in range(1, n + 1)]


DEPARTURE_RULES = ("random", "fifo", "lifo", "none")


@dataclass
class RandomPermutationSpec:
    """Weights assigned to arrival slots by a uniformly random permutation.

    After ``prefix`` arrivals (default n // 2) each step is an arrival or a
    departure with probability 1/2 while arrivals remain; leftover jobs then
    depart (``drain``).  ``departures`` picks who leaves.
    """

    weights: Sequence[int]
    seed: int = 0
    departures: str = "random"
    prefix: Optional[int] = None
    drain: bool = True

    def __post_init__(self):
        if len(self.weights) < 1:
            raise ValueError("need at least one weight")
        if self.departures not in DEPARTURE_RULES:
            raise ValueError(f"departure rule must be one of {DEPARTURE_RULES}")
        self.weights = [int(w) for w in self.weights]
        if any(w < 1 for w in self.weights):
            raise ValueError("weights must be positive integers")


def random_permutation_stream(spec: RandomPermutationSpec) -> list[Event]:
    rng = np.random.default_rng(spec.seed)
    n = len(spec.weights)
    order = rng.permutation(n)
    slot_weights = [spec.weights[i] for i in order]
    events: list[Event] = []
    alive: list[int] = []
    t = 0
    nxt = 0

    def arrive():
        nonlocal nxt
        jid = nxt + 1
        events.append(Arrival(t, Job(jid, slot_weights[nxt], arrival_index=t)))
        alive.append(jid)
        nxt += 1

    def depart():
        if spec.departures == "fifo":
            jid = alive.pop(0)
        elif spec.departures == "lifo":
            jid = alive.pop()
        else:
            k = int(rng.integers(len(alive)))
            alive[k], alive[-1] = alive[-1], alive[k]
            jid = alive.pop()
        events.append(Departure(t, jid))

    prefix = n // 2 if spec.prefix is None else min(spec.prefix, n)
    if spec.departures == "none":
        prefix = n
    for _ in range(max(prefix, 1)):
        t += 1
        arrive()
    while nxt < n:
        t += 1
        if alive and rng.random() < 0.5:
            depart()
        else:
            arrive()
    if spec.drain and spec.departures != "none":
        while alive:
            t += 1
            depart()
    return events


# ---------------------------------------------------------------------------
# batch adversary

class AdversaryInvariantError(AssertionError):
    """The adversary reached a state its own analysis rules out."""


@dataclass
class Batch:
    type: int
    members: list[int]
    weight: int
    arrived: int
    watermark: int                      # disruptions count only at times > watermark
    disrupted: set[int] = field(default_factory=set)
    departed: Optional[int] = None

    @property
    def is_disrupted(self) -> bool:
        return 2 * len(self.disrupted) >= len(self.members)


@dataclass
class PhaseRecord:
    end_time: int
    k: int
    disrupted_in_k: int
    departed_types: list[int]


def batch_type_cap(c) -> int:
    """Highest batch type a certified c-approximate opponent can face: 4*ceil(c) + 1."""
    return 4 * math.ceil(as_frac(c)) + 1


@dataclass
class BatchAdversaryState:
    M: int
    b: int
    c: Fraction
    alive: list[Batch] = field(default_factory=list)        # index == type
    history: list[Batch] = field(default_factory=list)      # every batch ever spawned
    phases: list[PhaseRecord] = field(default_factory=list)
    total_arrivals: int = 0
    time: int = -1
    next_id: int = 1
    finished: bool = False
    max_type: int = -1

    def __post_init__(self):
        self.c = as_frac(self.c)
        if self.c < 1:
            raise ValueError("c must be at least 1")
        if isinstance(self.b, bool) or not isinstance(self.b, int) or self.b < 2:
            raise ValueError("b must be an integer >= 2")
        base = self.b ** batch_type_cap(self.c)
        if isinstance(self.M, bool) or not isinstance(self.M, int) or self.M < base or self.M % base:
            raise ValueError(f"M must be a positive multiple of b^(4*ceil(c)+1) = {base}")

    @property
    def a(self) -> int:
        return 2 * self.b

    def batch_size(self, k: int) -> int:
        return self.M // self.b ** k

    @property
    def alive_jobs(self) -> int:
        return sum(len(bt.members) for bt in self.alive)

    def observe(self, time: int, disrupted: set[int]) -> None:
        """Feed the ids disrupted at ``time`` into the batches' marks."""
        for bt in self.alive:
            if time > bt.watermark:
                bt.disrupted.update(disrupted.intersection(bt.members))


def batch_adversary_step(state: BatchAdversaryState) -> tuple[str, list[Event]]:
    """Decide the next time step.

    Returns ``("arrive", events)``, ``("phase_end", events)`` or ``("terminate", [])``.
    The caller reports the ids disrupted in each step through ``state.observe``.
    """
    if state.finished:
        return "terminate", []
    t = state.time + 1
    disrupted = [bt for bt in state.alive if bt.is_disrupted]
    if disrupted:
        k = min(bt.type for bt in disrupted)
        leaving = state.alive[k + 1:]
        events: list[Event] = [Departure(t, j) for bt in leaving for j in bt.members]
        for bt in leaving:
            bt.departed = t
        top = state.alive[k]
        state.phases.append(PhaseRecord(t, k, len(top.disrupted), [bt.type for bt in leaving]))
        del state.alive[k + 1:]
        if state.total_arrivals >= 3 * state.M:
            state.finished = True
        if events:
            # the surviving top batch starts a fresh epoch after this step
            top.watermark, top.disrupted = t, set()
            state.time = t
            return "phase_end", events
        top.watermark, top.disrupted = t - 1, set()
        if state.finished:
            return "terminate", []
    k = len(state.alive)
    if k > batch_type_cap(state.c):
        raise AdversaryInvariantError(
            f"a batch of type {k} would be needed; the opponent cannot be {state.c}-approximate")
    if state.alive:
        prev = state.alive[-1]
        prev.watermark, prev.disrupted = t - 1, set()
    size, weight = state.batch_size(k), state.a ** k
    ids = list(range(state.next_id, state.next_id + size))
    state.next_id += size
    bt = Batch(k, ids, weight, arrived=t, watermark=t)
    state.alive.append(bt)
    state.history.append(bt)
    state.total_arrivals += size
    state.max_type = max(state.max_type, k)
    state.time = t
    if state.alive_jobs > 2 * state.M:
        raise AdversaryInvariantError("more than 2M jobs alive")
    return "arrive", [Arrival(t, Job(j, weight, arrival_index=t)) for j in ids]


@dataclass
class GameResult:
    ledger: DisruptionLedger
    report: RunReport
    certified: bool
    failure: Optional[CertificationFailure] = None
    details: dict = field(default_factory=dict)
    state: object = None


def _as_multi(opponent) -> PerDimension:
    return opponent if isinstance(opponent, PerDimension) else PerDimension([opponent])


def run_batch_game(M: int, b: int, c, opponent, max_steps: int = 10_000_000) -> GameResult:
    """Play the batch adversary against ``opponent`` under weighted fairness."""
    state = BatchAdversaryState(M, b, as_frac(c))
    opponent = _as_multi(opponent)
    policy = WeightedPolicy()
    tracker = Tracker(1, state.c, strict=True)
    failure = None
    for _ in range(max_steps):
        kind, events = batch_adversary_step(state)
        if kind == "terminate":
            break
        tracker.begin_step(state.time)
        try:
            for ev in events:
                if isinstance(ev, Arrival):
                    policy.arrive(ev.job)
                    shares = policy.shares()
                    tracker.arrive(ev.job.id)
                    tracker.note_shares(shares)
                    tracker.apply(opponent.on_arrival(ev.job.id, shares))
                else:
                    policy.depart(ev.job_id)
                    shares = policy.shares()
                    tracker.depart(ev.job_id)
                    tracker.note_shares(shares)
                    tracker.apply(opponent.on_departure(ev.job_id, shares))
            hit = tracker.end_step(shares)
        except InvariantViolation as exc:
            failure = CertificationFailure(exc.time, exc.reason)
            log.info("opponent lost certification: %s", failure)
            break
        state.observe(state.time, hit)
    else:
        raise RuntimeError("batch game did not terminate")
    report = RunReport.from_tracker(tracker, aborted=failure is not None)
    details = {
        "M": M, "b": b, "c": str(state.c),
        "phases": len(state.phases),
        "total_arrivals": state.total_arrivals,
        "max_type": state.max_type,
        "charge_bound": str(Fraction(M * (b - 1), 2)),
    }
    return GameResult(tracker.ledger, report, failure is None, failure, details, state)


# ---------------------------------------------------------------------------
# monotone adversary

def monotone_disruption_floor(n: int, c) -> int:
    """Smallest integer d with c^(3 + 2d) >= n, i.e. ceil((log_c n - 3) / 2) clamped at 0."""
    c = as_frac(c)
    d = 0
    while c ** (3 + 2 * d) < n:
        d += 1
    return d


def run_monotone_game(n: int, c, opponent) -> GameResult:
    """Drive ``n`` arrivals with shares imposed by the monotone adversary."""
    if n < 1:
        raise ValueError("n must be at least 1")
    state = MonotoneAdversaryState(as_frac(c))
    opponent = _as_multi(opponent)
    if opponent.dims != 1:
        raise ValueError("the monotone game is one-dimensional")
    tracker = Tracker(1, state.c, strict=True)
    failure = None
    for j in range(1, n + 1):
        tracker.begin_step(j)
        try:
            state.arrive(j)
            shares = state.shares()
            tracker.arrive(j)
            tracker.note_shares([shares])
            (delta,) = opponent.on_arrival(j, [shares])
            tracker.apply([delta])
            tracker.end_step([shares])
            monotone_adversary_step(state, delta)
        except InvariantViolation as exc:
            failure = CertificationFailure(exc.time, exc.reason)
        except CertificationFailure as exc:
            failure = exc
        if failure is not None:
            log.info("opponent lost certification: %s", failure)
            break
    report = RunReport.from_tracker(tracker, aborted=failure is not None)
    details = {"n": n, "c": str(state.c), "total_imposed": str(state.total_imposed)}
    if failure is None:
        d_min = monotone_disruption_floor(n, state.c)
        cutoff = state.c / n
        small = [j for j, s in state.imposed.items() if s <= cutoff]
        counts = tracker.ledger.counts()
        meeting = sum(1 for j in small if counts.get(j, 0) >= d_min)
        need = math.floor(n / state.c)
        details.update({
            "d_min": d_min,
            "small_share_jobs": len(small),
            "small_share_jobs_meeting_d_min": meeting,
            "required_jobs": need,
            "bound_holds": len(small) >= need and meeting == len(small),
        })
    return GameResult(tracker.ledger, report, failure is None, failure, details, state)


def monotone_adversary_run(n: int, c, opponent) -> tuple[DisruptionLedger, GameResult]:
    result = run_monotone_game(n, c, opponent)
    return result.ledger, result
