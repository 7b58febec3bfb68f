"""(1+eps)-approximate allocator for monotone share policies, arrivals only.

A job is light once its share is at most eps / (2n); light jobs are frozen.
A heavy job keeps its allocation while its share stays at least
(1 + eps/2) times that allocation and is otherwise reset to share / (1 + eps).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ..core import ScaledShares, as_frac


class NotMonotone(ValueError):
    pass


@dataclass
class LightHeavyState:
    epsilon: Fraction
    n: int
    allocations: dict[int, Fraction] = field(default_factory=dict)
    light: set[int] = field(default_factory=set)
    seen: dict[int, Fraction] = field(default_factory=dict)

    @property
    def light_threshold(self) -> Fraction:
        return self.epsilon / (2 * self.n)


def light_heavy_on_update(state: LightHeavyState, shares, new_job: Optional[int] = None,
                          examine=None) -> dict[int, Fraction]:
    """Apply new shares.  ``examine`` limits which existing jobs are looked at
    (by default all of ``shares``); returns the allocations that were set."""
    eps = state.epsilon
    keep_factor = 1 + eps / 2
    out = {}
    ids = shares.keys() if examine is None else examine
    for j in ids:
        if j == new_job:
            continue
        s = shares[j]
        prev = state.seen.get(j)
        if prev is not None and s > prev:
            raise NotMonotone(f"share of job {j} rose from {prev} to {s}")
        state.seen[j] = s
        if j in state.light:
            continue
        if s < keep_factor * state.allocations[j]:
            a = s / (1 + eps)
            state.allocations[j] = a
            out[j] = a
        if s <= state.light_threshold:
            state.light.add(j)
    if new_job is not None:
        s = shares[new_job]
        state.seen[new_job] = s
        a = s / (1 + eps)
        state.allocations[new_job] = a
        out[new_job] = a
        if s <= state.light_threshold:
            state.light.add(new_job)
    return out


class LightHeavyAllocator:
    """Known-n by default; ``doubling=True`` starts from a guess of 1 and, each
    time the arrivals exceed the guess, doubles it and replays the history."""

    supports_departures = False

    def __init__(self, epsilon, n: int | None = None, doubling: bool = False):
        self.epsilon = as_frac(epsilon)
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if n is None and not doubling:
            raise ValueError("give the job count n or enable doubling")
        self.doubling = doubling
        self.state = LightHeavyState(self.epsilon, 1 if doubling else n)
        self.claimed_ratio = 1 + self.epsilon
        self.arrivals = 0
        self._scale = None
        self._log: list[tuple[Optional[int], Fraction, dict]] = []

    @property
    def allocations(self):
        return self.state.allocations

    def _apply(self, shares: ScaledShares, new_job):
        if shares.scale != self._scale:
            examine = shares.numerators.keys()
        else:
            examine = shares.changed
        self._scale = shares.scale
        view = _ShareView(shares)
        return light_heavy_on_update(self.state, view, new_job, examine)

    def _record(self, shares, new_job):
        if self.doubling:
            ids = set(shares.changed)
            if new_job is not None:
                ids.add(new_job)
            self._log.append((new_job, shares.scale, {j: shares.numerators[j] for j in ids}))

    def on_arrival(self, job_id, shares):
        self.arrivals += 1
        self._record(shares, job_id)
        if self.doubling and self.arrivals > self.state.n:
            while self.arrivals > self.state.n:
                self.state.n *= 2
            return self._replay()
        return self._apply(shares, job_id)

    def on_share_update(self, shares):
        self._record(shares, None)
        return self._apply(shares, None)

    def on_departure(self, job_id, shares):
        raise NotImplementedError("the light/heavy allocator handles arrival-only streams")

    def _replay(self) -> dict[int, Fraction]:
        fresh = LightHeavyAllocator(self.epsilon, n=self.state.n)
        numerators: dict = {}
        for new_job, scale, changed in self._log:
            numerators.update(changed)
            shares = ScaledShares(numerators, scale, 0, frozenset(changed))
            if new_job is None:
                fresh.on_share_update(shares)
            else:
                fresh.on_arrival(new_job, shares)
        out = {j: a for j, a in fresh.allocations.items() if self.state.allocations.get(j) != a}
        self.state.allocations = fresh.state.allocations
        self.state.light = fresh.state.light
        self.state.seen = fresh.state.seen
        self._scale = fresh._scale
        return out


class _ShareView:
    def __init__(self, shares: ScaledShares):
        self._s = shares

    def __getitem__(self, j):
        return self._s[j]

    def keys(self):
        return self._s.numerators.keys()
