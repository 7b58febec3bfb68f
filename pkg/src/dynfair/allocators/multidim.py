"""Run one independent base allocator per resource dimension."""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Sequence

from ..core import ScaledShares


class PerDimension:
    def __init__(self, allocators: Sequence):
        if not allocators:
            raise ValueError("need at least one dimension")
        self.allocators = list(allocators)

    @property
    def dims(self) -> int:
        return len(self.allocators)

    @property
    def claimed_ratio(self) -> Fraction:
        return max(a.claimed_ratio for a in self.allocators)

    @property
    def supports_departures(self) -> bool:
        return all(a.supports_departures for a in self.allocators)

    @property
    def allocations(self) -> list[dict[int, Fraction]]:
        return [a.allocations for a in self.allocators]

    def on_arrival(self, job_id: int, shares: Sequence[ScaledShares]) -> list[dict[int, Fraction]]:
        return [a.on_arrival(job_id, s) for a, s in zip(self.allocators, shares, strict=True)]

    def on_departure(self, job_id: int, shares: Sequence[ScaledShares]) -> list[dict[int, Fraction]]:
        return [a.on_departure(job_id, s) for a, s in zip(self.allocators, shares, strict=True)]

    def on_share_update(self, shares: Sequence[ScaledShares]) -> list[dict[int, Fraction]]:
        return [a.on_share_update(s) for a, s in zip(self.allocators, shares, strict=True)]


def per_dimension_wrap(factory: Callable[[], object], dims: int) -> PerDimension:
    if dims < 1:
        raise ValueError("dimension count must be at least 1")
    return PerDimension([factory() for _ in range(dims)])
