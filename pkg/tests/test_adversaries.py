from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from dynfair.adversaries import (AdversaryInvariantError, Arrival, BatchAdversaryState, RandomPermutationSpec,
                                 batch_adversary_step, batch_type_cap, geometric_instance,
                                 monotone_disruption_floor, random_permutation_stream, run_batch_game,
                                 run_monotone_game)
from dynfair.allocators import ExactAllocator, LightHeavyAllocator
from dynfair.core import Departure, validate_event_stream
from dynfair.policies import weighted_shares
from oracles import charging_oracle

F = Fraction


# -- geometric instance

def test_geometric_examples():
    assert [(e.time, e.job.weight) for e in geometric_instance(1)] == [(1, 1)]
    events = geometric_instance(3)
    assert [(e.time, e.job.weight) for e in events] == [(1, 1), (2, 2), (3, 4)]
    assert weighted_shares((e.job.id, e.job.weight) for e in events) == {1: F(1, 7), 2: F(2, 7), 3: F(4, 7)}
    with pytest.raises(ValueError):
        geometric_instance(0)


@given(st.integers(1, 300))
def test_geometric_total_weight(n):
    total = 0
    for t, ev in enumerate(geometric_instance(n), start=1):
        total += ev.job.weight
        assert total == 2 ** t - 1


# -- random permutation streams

def test_randperm_single_and_deterministic():
    one = random_permutation_stream(RandomPermutationSpec([5], seed=1))
    assert isinstance(one[0], Arrival) and one[0].job.weight == 5
    spec = RandomPermutationSpec([1, 2, 4, 8] * 5, seed=42)
    assert random_permutation_stream(spec) == random_permutation_stream(RandomPermutationSpec([1, 2, 4, 8] * 5, seed=42))


def test_randperm_uniform_over_permutations():
    """6000 seeds over weights {1,2,4}: each of the 6 orders within 3 sigma of 1000."""
    counts = Counter()
    for seed in range(6000):
        events = random_permutation_stream(RandomPermutationSpec([1, 2, 4], seed=seed, departures="none"))
        counts[tuple(e.job.weight for e in events)] += 1
    assert len(counts) == 6
    sigma = (6000 * (1 / 6) * (5 / 6)) ** 0.5
    for order, c in counts.items():
        assert abs(c - 1000) <= 3 * sigma, (order, c)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 100), min_size=1, max_size=50), st.integers(0, 2 ** 32),
       st.sampled_from(["random", "fifo", "lifo", "none"]), st.booleans())
def test_randperm_streams_are_valid(ws, seed, rule, drain):
    events = random_permutation_stream(RandomPermutationSpec(ws, seed=seed, departures=rule, drain=drain))
    validate_event_stream(events)
    assert sorted(e.job.weight for e in events if isinstance(e, Arrival)) == sorted(ws)
    times = [e.time for e in events]
    assert times == sorted(times) and len(set(times)) == len(times)
    if rule == "none":
        assert all(isinstance(e, Arrival) for e in events)
    elif drain:
        assert sum(isinstance(e, Departure) for e in events) == len(ws)


def test_randperm_validation():
    with pytest.raises(ValueError):
        RandomPermutationSpec([])
    with pytest.raises(ValueError):
        RandomPermutationSpec([1], departures="sideways")
    with pytest.raises(ValueError):
        RandomPermutationSpec([0, 1])


# -- batch adversary

def test_batch_shapes():
    st_ = BatchAdversaryState(32, 2, 1)
    assert st_.a == 4
    assert (st_.batch_size(0), st_.a ** 0) == (32, 1)
    assert (st_.batch_size(1), st_.a ** 1) == (16, 4)
    # B_{k+1} carries twice the aggregate weight of B_k
    assert st_.batch_size(1) * 4 == 2 * st_.batch_size(0) * 1
    assert batch_type_cap(1) == 5 and batch_type_cap(F(3, 2)) == 9


def test_batch_parameter_validation():
    with pytest.raises(ValueError, match="multiple"):
        BatchAdversaryState(10, 4, 1)
    with pytest.raises(ValueError):
        BatchAdversaryState(1024, 1, 1)
    with pytest.raises(ValueError):
        BatchAdversaryState(1024, 4, F(1, 2))


def test_batch_first_steps():
    st_ = BatchAdversaryState(1024, 4, 1)
    kind, events = batch_adversary_step(st_)
    assert kind == "arrive" and len(events) == 1024 and st_.time == 0
    st_.observe(0, set())
    kind, events = batch_adversary_step(st_)
    assert kind == "arrive" and len(events) == 256 and {e.job.weight for e in events} == {8}


def test_batch_game_against_exact():
    res = run_batch_game(1024, 4, 1, ExactAllocator())
    st_ = res.state
    assert res.certified
    assert 3 * 1024 <= st_.total_arrivals < 5 * 1024
    assert st_.max_type <= 5
    # every new batch disrupts everything alive, so each phase ends right after the second batch
    assert st_.max_type == 1 and all(ph.k == 0 for ph in st_.phases)
    oracle = charging_oracle(st_, res.ledger, 1024, 4)
    assert oracle["windows_ok"]
    assert oracle["jobs_at_half_b_minus_1"] >= 1024
    assert oracle["charged_total"] >= 1024 * 3 // 2
    assert res.report.total_disruptions >= oracle["charged_total"]


def test_batch_game_looser_claim():
    """With c = 2 the cap on batch types is 9 and M must be a multiple of 2^9."""
    res = run_batch_game(512, 2, 2, ExactAllocator())
    assert res.certified
    assert res.state.max_type <= batch_type_cap(2)
    oracle = charging_oracle(res.state, res.ledger, 512, 2)
    assert oracle["windows_ok"]
    assert oracle["jobs_at_half_b_minus_1"] >= 512
    assert res.report.total_disruptions >= 512 // 2


def test_batch_alive_cap_is_enforced():
    st_ = BatchAdversaryState(32, 2, 1)
    for _ in range(6):
        kind, _ = batch_adversary_step(st_)
        st_.observe(st_.time, set())
    with pytest.raises(AdversaryInvariantError):
        batch_adversary_step(st_)


def test_batch_opponent_that_cheats_loses():
    class Greedy:
        supports_departures = True
        claimed_ratio = F(1)

        def __init__(self):
            self.allocations = {}

        def on_arrival(self, job_id, shares):
            self.allocations[job_id] = F(1)
            return {job_id: F(1)}

        def on_departure(self, job_id, shares):
            self.allocations.pop(job_id, None)
            return {}

        def on_share_update(self, shares):
            return {}

    res = run_batch_game(1024, 4, 1, Greedy())
    assert not res.certified and res.failure is not None


# -- monotone adversary game

def test_monotone_floor_values():
    assert monotone_disruption_floor(16, 2) == 1
    assert monotone_disruption_floor(4096, 2) == 5
    assert monotone_disruption_floor(8, 2) == 0


def test_monotone_game_small_example():
    res = run_monotone_game(16, 2, LightHeavyAllocator(F(1), n=16))
    assert res.certified
    d = res.details
    assert d["small_share_jobs"] >= 8 and d["bound_holds"]


def test_monotone_game_against_exact_grows():
    maxima = []
    for n in (16, 64, 256):
        res = run_monotone_game(n, 2, ExactAllocator())
        assert res.certified and res.details["bound_holds"]
        assert F(res.details["total_imposed"]) <= 1
        maxima.append(res.report.per_job_max)
    assert maxima == sorted(maxima) and maxima[0] < maxima[-1]


def test_monotone_game_infeasible_opponent_fails():
    class Hog:
        supports_departures = False
        claimed_ratio = F(2)

        def __init__(self):
            self.allocations = {}

        def on_arrival(self, job_id, shares):
            self.allocations[job_id] = F(3, 4)
            return {job_id: F(3, 4)}

        def on_share_update(self, shares):
            return {}

    res = run_monotone_game(4, 2, Hog())
    assert not res.certified
    assert res.failure.step == 2
