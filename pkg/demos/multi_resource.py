"""Two-resource jobs: DRF shares and Cobb-Douglas with LogStar per resource.

    python3 demos/multi_resource.py
"""

from fractions import Fraction

from dynfair.allocators import LogStarAllocator, per_dimension_wrap
from dynfair.io import resolve_instance
from dynfair.policies import CobbDouglasPolicy, DrfProfile, drf_shares
from dynfair.simulator import decimal, simulate


def drf_example() -> None:
    # one CPU-heavy and one memory-heavy job, the classic DRF picture
    profile = DrfProfile({1: 1, 2: 1}, {1: (1, 4), 2: (3, 1)})
    res = drf_shares(profile, [1, 2])
    print("DRF, demands (1 CPU, 4 GB) and (3 CPU, 1 GB):")
    for j in (1, 2):
        print(f"  job {j}: rate {Fraction(res.rates[j])}, "
              f"shares {[str(Fraction(res.shares[d][j])) for d in range(2)]}")


def cobb_douglas(n: int = 300) -> None:
    events = resolve_instance(f"cobbdouglas:n={n},d=2", seed=3)
    res = simulate(events, CobbDouglasPolicy(2), per_dimension_wrap(LogStarAllocator, 2))
    rep = res.report
    print(f"Cobb-Douglas, {n} jobs, LogStar on each resource:")
    print(f"  disruptions per resource {rep.per_dimension_disruptions}, "
          f"worst ratio {decimal(rep.worst_ratio, 4)}, clean={rep.clean}")


if __name__ == "__main__":
    drf_example()
    cobb_douglas()
