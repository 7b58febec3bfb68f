"""Randomized threshold-reset allocator for arrivals and departures.

Thresholds are the values 2^k T for a random T in [1/2, 1).  A job starts at
half of its weighted fair share; whenever the total weight crosses a
threshold every alive job is reset to half of its current fair share.
Crossing is half-open: old < 2^k T <= new for arrivals, mirrored for
departures, so it happens exactly when floor(log2(W / T)) changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from ..core import Number, Q, ScaledShares
from .tower import floor_log2_ratio


def sample_threshold(rng: np.random.Generator) -> Fraction:
    """(2^63 + u) / 2^64 with u uniform on [0, 2^63): exact and dyadic."""
    u = int(rng.integers(0, 1 << 63, dtype=np.uint64))
    return Fraction((1 << 63) + u, 1 << 64)


@dataclass
class ThresholdState:
    T: Fraction
    total: Number = 0
    allocations: dict[int, Fraction] = field(default_factory=dict)

    def band(self, total: Number) -> Optional[int]:
        if total <= 0:
            return None
        return floor_log2_ratio(total, self.T)


def threshold_reset_on_event(state: ThresholdState, shares: ScaledShares,
                             arrived: Optional[int] = None,
                             departed: Optional[int] = None) -> dict[int, Fraction]:
    """Update ``state`` for one arrival or departure; return the entries that were set."""
    new_total = shares.total
    crossed = state.band(state.total) != state.band(new_total)
    state.total = new_total
    out = {}
    if departed is not None:
        state.allocations.pop(departed, None)
    if crossed and new_total > 0:
        for j, w in shares.numerators.items():
            a = Q(w, 2 * new_total) if type(w) is int and type(new_total) is int else w / (2 * Q(new_total))
            if state.allocations.get(j) != a:
                state.allocations[j] = a
                out[j] = a
    elif arrived is not None:
        a = shares.numerators[arrived] / (2 * Q(new_total))
        state.allocations[arrived] = a
        out[arrived] = a
    if arrived is not None and arrived not in out:
        out[arrived] = state.allocations[arrived]
    return out


class ThresholdResetAllocator:
    supports_departures = True
    claimed_ratio = Fraction(4)

    def __init__(self, rng: np.random.Generator | int | None = None, T: Fraction | None = None):
        if T is None:
            rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
            T = sample_threshold(rng)
        if not Fraction(1, 2) <= T <= 1:
            raise ValueError("T must lie in [1/2, 1]")
        self.state = ThresholdState(T)
        self.resets = 0

    @property
    def allocations(self):
        return self.state.allocations

    def _event(self, shares, arrived=None, departed=None):
        before = self.state.band(self.state.total)
        out = threshold_reset_on_event(self.state, shares, arrived, departed)
        if before != self.state.band(self.state.total) and shares.total > 0:
            self.resets += 1
        return out

    def on_arrival(self, job_id, shares):
        return self._event(shares, arrived=job_id)

    def on_departure(self, job_id, shares):
        return self._event(shares, departed=job_id)

    def on_share_update(self, shares):
        return self._event(shares)
