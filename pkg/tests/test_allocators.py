import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynfair.adversaries import RandomPermutationSpec, geometric_instance, random_permutation_stream
from dynfair.allocators import (ExactAllocator, LightHeavyAllocator, LightHeavyState, LogStarAllocator,
                                NotMonotone, PerDimension, ThresholdResetAllocator, exact_allocate,
                                light_heavy_on_update, per_dimension_wrap, sample_threshold)
from dynfair.core import Arrival, Job, Q, ScaledShares
from dynfair.io import random_exponents
from dynfair.policies import CobbDouglasPolicy, MonotoneAdversaryState, WeightedPolicy, cobb_douglas_log_rate
from dynfair.simulator import Tracker, simulate
from oracles import threshold_oracle

F = Fraction


# -- exact baseline

def test_exact_geometric_disrupts_everyone():
    res = simulate(geometric_instance(30), WeightedPolicy(), ExactAllocator())
    assert res.report.total_disruptions == 30 * 29 // 2
    assert res.report.worst_ratio == 1
    for j, times in res.ledger.per_job.items():
        assert times == list(range(j + 1, 31))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 1000), min_size=1, max_size=30), st.integers(0, 2 ** 32))
def test_exact_ratio_is_one(ws, seed):
    events = random_permutation_stream(RandomPermutationSpec(ws, seed=seed))
    res = simulate(events, WeightedPolicy(), ExactAllocator())
    assert res.report.worst_ratio in (None, 1)
    assert res.report.clean


def test_exact_allocate_stateless():
    assert exact_allocate({1: F(1, 3)}) == {1: F(1, 3)}
    assert exact_allocate(ScaledShares({1: 1, 2: 2}, Q(1, 3), 3)) == {1: F(1, 3), 2: F(2, 3)}


def test_static_shares_no_disruption():
    tr = Tracker(1, F(1))
    tr.begin_step(1)
    tr.arrive(1)
    shares = [ScaledShares({1: 1}, Q(1), 1, frozenset({1}))]
    tr.note_shares(shares)
    tr.apply([{1: F(1)}])
    tr.end_step(shares)
    tr.begin_step(2)
    tr.apply([{1: F(1)}])
    assert tr.end_step([ScaledShares({1: 1}, Q(1), 1)]) == set()
    assert tr.ledger.total == 0


# -- threshold reset

def test_threshold_example_resets():
    alloc = ThresholdResetAllocator(T=F(3, 4))
    policy = WeightedPolicy()
    for j in (1, 2, 3):
        policy.arrive(Job(j, 1))
        alloc.on_arrival(j, policy.shares()[0])
    # W: 0->1 crosses 3/4, 1->2 crosses 3/2, 2->3 reaches 3 = 4 * 3/4
    assert alloc.resets == 3
    assert alloc.allocations == {1: F(1, 6), 2: F(1, 6), 3: F(1, 6)}


def test_threshold_single_job_keeps_half():
    alloc = ThresholdResetAllocator(T=F(3, 4))
    policy = WeightedPolicy()
    policy.arrive(Job(1, 5))
    assert alloc.on_arrival(1, policy.shares()[0]) == {1: F(1, 2)}


def test_sample_threshold_range():
    rng = np.random.default_rng(0)
    for _ in range(200):
        T = sample_threshold(rng)
        assert F(1, 2) <= T < 1
        assert T.denominator & (T.denominator - 1) == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 64), min_size=1, max_size=40), st.integers(0, 2 ** 32),
       st.sampled_from(["random", "fifo", "lifo"]))
def test_threshold_matches_oracle_and_is_4_approximate(ws, seed, rule):
    events = random_permutation_stream(RandomPermutationSpec(ws, seed=seed, departures=rule))
    alloc = ThresholdResetAllocator(np.random.default_rng(seed))
    T = alloc.state.T
    res = simulate(events, WeightedPolicy(), alloc, trace="full")
    assert res.report.clean and res.report.worst_ratio <= 4
    expect = threshold_oracle(events, T)
    for step, want in zip(res.trace, expect):
        assert {j: a for j, (a, _) in step.snapshots[0].entries.items()} == want


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 64), min_size=2, max_size=40), st.integers(0, 2 ** 32))
def test_threshold_band_between_resets(ws, seed):
    """Without a reset the total stays inside one interval [2^k T, 2^(k+1) T)."""
    events = random_permutation_stream(RandomPermutationSpec(ws, seed=seed))
    alloc = ThresholdResetAllocator(np.random.default_rng(seed))
    T = alloc.state.T
    policy = WeightedPolicy()
    resets = alloc.resets
    band = None
    for ev in events:
        if isinstance(ev, Arrival):
            policy.arrive(ev.job)
            alloc.on_arrival(ev.job.id, policy.shares()[0])
        else:
            policy.depart(ev.job_id)
            alloc.on_departure(ev.job_id, policy.shares()[0])
        W = policy.total
        if W == 0:
            continue
        if alloc.resets == resets and band is not None:
            assert T * 2 ** band <= W < T * 2 ** (band + 1)
        resets = alloc.resets
        band = math.floor(math.log2(W / T))
        while T * 2 ** band > W:
            band -= 1
        while T * 2 ** (band + 1) <= W:
            band += 1


# -- light / heavy

def _lh_step(state, shares, new=None):
    return light_heavy_on_update(state, shares, new)


def test_lightheavy_examples():
    state = LightHeavyState(F(1), 100)
    assert _lh_step(state, {1: F(1, 2)}, new=1) == {1: F(1, 4)}
    assert _lh_step(state, {1: F(3, 8)}) == {}
    assert state.allocations[1] == F(1, 4)
    out = _lh_step(state, {1: F(1, 400)})
    assert 1 in state.light and out == {1: F(1, 800)}
    assert _lh_step(state, {1: F(1, 10 ** 6)}) == {}
    assert state.allocations[1] == F(1, 800)


def test_lightheavy_rejects_rising_share():
    state = LightHeavyState(F(1), 10)
    _lh_step(state, {1: F(1, 4)}, new=1)
    with pytest.raises(NotMonotone):
        _lh_step(state, {1: F(1, 2)})


def _lightheavy_monotone_game(n, eps, opponent):
    adv = MonotoneAdversaryState(1 + eps)
    tr = Tracker(1, 1 + eps)
    from dynfair.policies import monotone_adversary_step
    for j in range(1, n + 1):
        tr.begin_step(j)
        adv.arrive(j)
        shares = adv.shares()
        tr.arrive(j)
        tr.note_shares([shares])
        delta = opponent.on_arrival(j, shares)
        tr.apply([delta])
        tr.end_step([shares])
        monotone_adversary_step(adv, delta)
        state = opponent.state
        light = sum(state.allocations[i] for i in state.light)
        assert light <= eps / 2
        for i, a in state.allocations.items():
            if i not in state.light:
                assert a <= adv.imposed[i] / (1 + eps / 2)
    return tr


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 120), st.sampled_from([F(1), F(1, 2), F(2), F(1, 4)]))
def test_lightheavy_against_monotone_adversary(n, eps):
    opp = LightHeavyAllocator(eps, n=n)
    tr = _lightheavy_monotone_game(n, eps, opp)
    assert tr.feasibility_violations == tr.approximation_violations == 0
    assert tr.worst_ratio <= 1 + eps
    bound = math.log((1 + eps) * 2 * n / eps) / math.log((1 + eps) / (1 + eps / 2)) + 1
    assert tr.ledger.max_per_job() <= bound


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(1, 2 ** 20), min_size=1, max_size=60), st.sampled_from([F(1), F(1, 3)]))
def test_lightheavy_weighted_and_doubling(ws, eps):
    events = [Arrival(j, Job(j, w, arrival_index=j)) for j, w in enumerate(ws, start=1)]
    for opp in (LightHeavyAllocator(eps, n=len(ws)), LightHeavyAllocator(eps, doubling=True)):
        res = simulate(events, WeightedPolicy(), opp)
        assert res.report.clean and res.report.worst_ratio <= 1 + eps
    assert opp.state.n >= len(ws) and opp.state.n & (opp.state.n - 1) == 0


def test_lightheavy_needs_n_or_doubling():
    with pytest.raises(ValueError):
        LightHeavyAllocator(F(1))
    with pytest.raises(ValueError):
        LightHeavyAllocator(F(0), n=3)


# -- per-dimension wrapper

def test_wrapper_one_dimension_matches_base():
    events = geometric_instance(60)
    base = simulate(events, WeightedPolicy(), LogStarAllocator())
    wrapped = simulate(events, WeightedPolicy(), per_dimension_wrap(LogStarAllocator, 1))
    assert base.ledger == wrapped.ledger
    assert base.report.total_disruptions == wrapped.report.total_disruptions


def test_wrapper_identical_dimensions_agree():
    events = [Arrival(j, Job(j, 1, arrival_index=j, demands=(F(1, 2), F(1, 2)))) for j in range(1, 30)]
    res = simulate(events, CobbDouglasPolicy(2), per_dimension_wrap(LogStarAllocator, 2))
    a0, a1 = res.allocator.allocations
    assert a0 == a1
    assert res.report.per_dimension_disruptions[0] == res.report.per_dimension_disruptions[1]


def test_wrapper_validation():
    with pytest.raises(ValueError):
        per_dimension_wrap(ExactAllocator, 0)
    with pytest.raises(ValueError):
        PerDimension([])


def test_cobb_douglas_rate_bound_small():
    rng = np.random.default_rng(5)
    vecs = random_exponents(40, 2, rng)
    events = [Arrival(j, Job(j, 1, arrival_index=j, demands=vecs[j - 1])) for j in range(1, 41)]
    res = simulate(events, CobbDouglasPolicy(2), per_dimension_wrap(LogStarAllocator, 2))
    policy = CobbDouglasPolicy(2)
    for ev in events:
        policy.arrive(ev.job)
    shares = policy.shares()
    allocs = res.allocator.allocations
    for ev in events:
        j = ev.job.id
        x = [allocs[d][j] for d in range(2)]
        xs = [shares[d][j] for d in range(2)]
        gap = cobb_douglas_log_rate(ev.job.demands, x) - cobb_douglas_log_rate(ev.job.demands, xs)
        assert gap >= -math.log(24) - 1e-9
