"""The two adversaries, played against allocators that must certify themselves.

The batch adversary uses departures to force every job of the exact
allocator to be disrupted repeatedly.  The monotone adversary only ever
lowers fair shares, yet still forces logarithmically many changes on the
jobs whose shares it drives down.

    python3 demos/adversary_games.py
"""

from fractions import Fraction

from dynfair.adversaries import run_batch_game, run_monotone_game
from dynfair.allocators import ExactAllocator, LightHeavyAllocator


def batch() -> None:
    res = run_batch_game(1024, 4, 1, ExactAllocator())
    st = res.state
    print(f"batch game, M=1024 b=4: certified={res.certified}")
    print(f"  {len(st.phases)} phases, {st.total_arrivals} arrivals, highest batch type {st.max_type}")
    print(f"  {res.report.total_disruptions} disruptions, about "
          f"{res.report.total_disruptions / st.total_arrivals:.2f} per arrival")


def monotone(n: int = 4096) -> None:
    res = run_monotone_game(n, 2, LightHeavyAllocator(Fraction(1), n=n))
    d = res.details
    print(f"monotone game, n={n} c=2 against LightHeavy: certified={res.certified}")
    print(f"  {d['small_share_jobs']} jobs pushed to share <= c/n, "
          f"{d['small_share_jobs_meeting_d_min']} of them disrupted at least {d['d_min']} times")
    print(f"  max disruptions on one job: {res.report.per_job_max}")


if __name__ == "__main__":
    batch()
    monotone()
