"""Baseline that always hands out exactly the fair share."""

from __future__ import annotations

from fractions import Fraction

from ..core import ScaledShares


def exact_allocate(shares) -> dict[int, Fraction]:
    if isinstance(shares, ScaledShares):
        return shares.as_dict()
    return dict(shares)


class ExactAllocator:
    supports_departures = True
    claimed_ratio = Fraction(1)

    def __init__(self):
        self.allocations: dict[int, Fraction] = {}
        self._scale = None

    def _sync(self, shares: ScaledShares) -> dict[int, Fraction]:
        # when the scale is unchanged only the re-numbered jobs can move
        if shares.scale == self._scale:
            out = {}
            for j in shares.changed:
                a = shares[j]
                if self.allocations.get(j) != a:
                    out[j] = a
        else:
            # a new scale moves every job with a nonzero numerator
            out = shares.values(shares.numerators)
        self._scale = shares.scale
        self.allocations.update(out)
        return out

    def on_arrival(self, job_id, shares):
        return self._sync(shares)

    def on_departure(self, job_id, shares):
        self.allocations.pop(job_id, None)
        return self._sync(shares)

    def on_share_update(self, shares):
        return self._sync(shares)
