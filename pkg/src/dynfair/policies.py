"""Fair-share policies: weighted, Cobb-Douglas proportional fairness, weighted DRF,
and the adaptive monotone adversary that imposes shares in response to an allocator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence

from .core import Job, Q, ScaledShares, as_frac


class CertificationFailure(Exception):
    """An allocator broke its feasibility or approximation claim during a game."""

    def __init__(self, step: int, reason: str):
        super().__init__(f"step {step}: {reason}")
        self.step = step
        self.reason = reason


# ---------------------------------------------------------------------------
# stateless share computations

def weighted_shares(alive: Iterable[tuple[int, int]]) -> dict[int, Fraction]:
    alive = list(alive)
    if not alive:
        raise ValueError("weighted_shares needs at least one alive job")
    total = sum(w for _, w in alive)
    return {j: Fraction(w, total) for j, w in alive}


@dataclass
class CobbDouglasProfile:
    """Per-job substitutability vectors; each must be positive and sum to 1."""

    alphas: dict[int, tuple[Fraction, ...]]

    def __post_init__(self):
        dims = None
        for j, vec in self.alphas.items():
            vec = tuple(as_frac(a) for a in vec)
            if any(a <= 0 for a in vec) or sum(vec) != 1:
                raise ValueError(f"job {j}: exponents must be positive and sum to 1")
            if dims is not None and len(vec) != dims:
                raise ValueError("exponent vectors differ in length")
            dims = len(vec)
            self.alphas[j] = vec

    @property
    def dims(self) -> int:
        return len(next(iter(self.alphas.values())))


def cobb_douglas_shares(profile: CobbDouglasProfile, alive: Iterable[int]) -> list[dict[int, Fraction]]:
    alive = list(alive)
    if not alive:
        raise ValueError("cobb_douglas_shares needs at least one alive job")
    out = []
    for d in range(profile.dims):
        total = sum(profile.alphas[j][d] for j in alive)
        out.append({j: profile.alphas[j][d] / total for j in alive})
    return out


def cobb_douglas_log_rate(alphas: Sequence[Fraction], x: Sequence[Fraction]) -> float:
    """log y = sum_d alpha_d log x_d.  The rate itself is irrational in general."""
    return sum(float(a) * _log_frac(xd) for a, xd in zip(alphas, x))


def _log_frac(x: Fraction) -> float:
    # math.log accepts arbitrarily large ints, a float(x) would underflow
    return math.log(x.numerator) - math.log(x.denominator)


@dataclass
class DrfProfile:
    weights: dict[int, int]
    requirements: dict[int, tuple[Fraction, ...]]

    def __post_init__(self):
        for j, vec in self.requirements.items():
            vec = tuple(r if type(r) is int else as_frac(r) for r in vec)
            if not vec or any(r <= 0 for r in vec):
                raise ValueError(f"job {j}: requirements must be positive")
            self.requirements[j] = vec

    @property
    def dims(self) -> int:
        return len(next(iter(self.requirements.values())))

    def dominant(self, j: int) -> Fraction:
        return max(self.requirements[j])


class DrfResult(NamedTuple):
    level: Fraction                     # common value of w_j * y_j * max_d r_jd
    rates: dict[int, Fraction]
    shares: list[dict[int, Fraction]]   # per dimension, r_jd * y_j


def drf_shares(profile: DrfProfile, alive: Iterable[int]) -> DrfResult:
    """Weighted DRF in closed form.

    With y_j = level / (w_j m_j), dimension d consumes level * sum_j r_jd/(w_j m_j),
    so the largest feasible level is the min over d of the reciprocal sums.
    """
    alive = list(alive)
    if not alive:
        raise ValueError("drf_shares needs at least one alive job")
    req = profile.requirements
    coeff = {j: 1 / Q(profile.weights[j] * max(req[j])) for j in alive}
    sums = [sum(req[j][d] * coeff[j] for j in alive) for d in range(profile.dims)]
    level = 1 / max(sums)
    rates = {j: level * coeff[j] for j in alive}
    shares = [{j: req[j][d] * rates[j] for j in alive} for d in range(profile.dims)]
    return DrfResult(level, rates, shares)


# ---------------------------------------------------------------------------
# incremental policies used by the simulator

class WeightedPolicy:
    """I(j,t) = w_j / sum of alive weights."""

    dims = 1

    def __init__(self):
        self.weights: dict[int, int] = {}
        self.total = 0
        self._changed: set[int] = set()

    def arrive(self, job: Job) -> None:
        self.weights[job.id] = job.weight
        self.total += job.weight
        self._changed.add(job.id)

    def depart(self, job_id: int) -> None:
        self.total -= self.weights.pop(job_id)
        self._changed.discard(job_id)

    def shares(self) -> list[ScaledShares]:
        scale = Q(1, self.total) if self.total else Q(0)
        changed, self._changed = frozenset(self._changed), set()
        return [ScaledShares(self.weights, scale, self.total, changed)]

    def fair_shares(self, jobs, time=None):
        return [weighted_shares((j.id, j.weight) for j in jobs)]


class _VectorPolicy:
    """Shared plumbing for per-dimension numerators with one scale per dimension."""

    def __init__(self, dims: int):
        self.dims = dims
        self.numerators: list[dict[int, Fraction]] = [{} for _ in range(dims)]
        self.totals = [Q(0)] * dims
        self._changed: set[int] = set()

    def _numerators_for(self, job: Job) -> tuple[Fraction, ...]:
        raise NotImplementedError

    def _scales(self) -> list[Fraction]:
        raise NotImplementedError

    def arrive(self, job: Job) -> None:
        nums = self._numerators_for(job)
        if len(nums) != self.dims:
            raise ValueError(f"job {job.id}: expected {self.dims} demand entries")
        for d, v in enumerate(nums):
            self.numerators[d][job.id] = v
            self.totals[d] += v
        self._changed.add(job.id)

    def depart(self, job_id: int) -> None:
        for d in range(self.dims):
            self.totals[d] -= self.numerators[d].pop(job_id)
        self._changed.discard(job_id)

    def shares(self) -> list[ScaledShares]:
        changed, self._changed = frozenset(self._changed), set()
        return [ScaledShares(self.numerators[d], s, self.totals[d], changed)
                for d, s in enumerate(self._scales())]


class CobbDouglasPolicy(_VectorPolicy):
    """Proportionally fair shares: x_jd = alpha_jd / sum_k alpha_kd.  Exponents come from ``job.demands``."""

    def _numerators_for(self, job):
        if job.demands is None:
            raise ValueError(f"job {job.id}: Cobb-Douglas needs an exponent vector")
        CobbDouglasProfile({job.id: job.demands})  # validates
        return job.demands

    def _scales(self):
        return [1 / t if t else Q(0) for t in self.totals]

    def fair_shares(self, jobs, time=None):
        return cobb_douglas_shares(CobbDouglasProfile({j.id: j.demands for j in jobs}), [j.id for j in jobs])


class DrfPolicy(_VectorPolicy):
    """Weighted DRF.  ``job.weight`` is w_j and ``job.demands`` is the requirement vector."""

    def _numerators_for(self, job):
        if job.demands is None or any(r <= 0 for r in job.demands):
            raise ValueError(f"job {job.id}: DRF needs positive requirements")
        coeff = Q(1) / (job.weight * max(job.demands))
        return tuple(r * coeff for r in job.demands)

    def _scales(self):
        if not self.totals[0]:
            return [Q(0)] * self.dims
        level = min(1 / t for t in self.totals)
        return [level] * self.dims

    def fair_shares(self, jobs, time=None):
        profile = DrfProfile({j.id: j.weight for j in jobs}, {j.id: j.demands for j in jobs})
        return drf_shares(profile, [j.id for j in jobs]).shares


POLICIES = {
    "weighted": WeightedPolicy,
    "cobbdouglas": CobbDouglasPolicy,
    "drf": DrfPolicy,
}


def make_policy(name: str, dims: int | None = None):
    if name == "weighted":
        return WeightedPolicy()
    if name not in POLICIES:
        raise ValueError(f"unknown policy {name!r}")
    if dims is None:
        raise ValueError(f"policy {name!r} needs a dimension count")
    return POLICIES[name](dims)


# ---------------------------------------------------------------------------
# adaptive monotone adversary

@dataclass
class MonotoneAdversaryState:
    """Shares imposed by the adversary of the monotone lower bound.

    ``imposed`` holds the shares the allocator is currently certified against.
    Lowered shares computed from a response wait in ``pending`` and take
    effect together with the next arrival.
    """

    c: Fraction
    imposed: dict[int, Fraction] = field(default_factory=dict)
    allocations: dict[int, Fraction] = field(default_factory=dict)
    pending: dict[int, Fraction] = field(default_factory=dict)
    total_imposed: Fraction = Fraction(0)
    total_allocated: Fraction = Fraction(0)
    step: int = 0
    last_lowered: set = field(default_factory=set)
    _changed: set = field(default_factory=set)
    _new: set = field(default_factory=set)

    def __post_init__(self):
        self.c = as_frac(self.c)
        if self.c <= 1:
            raise ValueError("adversary parameter c must exceed 1")

    def arrive(self, job_id: int) -> Fraction:
        """Apply pending reductions and impose 1/c on a new job (capped by what is left)."""
        self._apply_pending()
        if job_id in self.imposed:
            raise ValueError(f"job {job_id} already arrived")
        share = min(1 / self.c, 1 - self.total_imposed)
        if share <= 0:
            raise CertificationFailure(self.step, "no fair share left to impose")
        self.imposed[job_id] = share
        self.total_imposed += share
        self._changed.add(job_id)
        self._new.add(job_id)
        self.step += 1
        return share

    def _apply_pending(self) -> None:
        for j, s in self.pending.items():
            self.total_imposed += s - self.imposed[j]
            self.imposed[j] = s
            self._changed.add(j)
        self.pending = {}

    def shares(self) -> ScaledShares:
        changed, self._changed = frozenset(self._changed), set()
        return ScaledShares(self.imposed, Q(1), self.total_imposed, changed)


def monotone_adversary_step(state: MonotoneAdversaryState, response: Mapping[int, Fraction]) -> dict[int, Fraction]:
    """Certify an allocator response, then lower the shares of the jobs it touched.

    ``response`` holds the allocation entries the allocator set this step.
    Raises :class:`CertificationFailure` if the allocation is infeasible or not
    c-approximate against the imposed shares.  Returns the reduced shares, which
    are also queued on the state for the next arrival.
    """
    step = state.step
    touched = set(state._new)
    for j, a in response.items():
        if j not in state.imposed:
            raise CertificationFailure(step, f"allocation for unknown job {j}")
        old = state.allocations.get(j)
        if old != a:
            touched.add(j)
        state.total_allocated += a - (old or 0)
        state.allocations[j] = a
    missing = state._new - state.allocations.keys()
    if missing:
        raise CertificationFailure(step, f"no allocation for new job(s) {sorted(missing)}")
    if state.total_allocated > 1:
        raise CertificationFailure(step, f"infeasible: total allocation {state.total_allocated}")
    # jobs whose share was lowered since the last certification are rechecked too
    for j in touched | state.last_lowered:
        a = state.allocations[j]
        if a <= 0 or a * state.c < state.imposed[j]:
            raise CertificationFailure(step, f"job {j} allocated {a} below {state.imposed[j]}/{state.c}")
    updates = {}
    for j in touched:
        new = min(state.imposed[j], state.allocations[j] / state.c)
        if new != state.imposed[j]:
            updates[j] = new
    state.pending = dict(updates)
    state.last_lowered = set(updates)
    state._new = set()
    return updates
