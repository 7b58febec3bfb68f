"""How much reallocation each allocator needs on the same arrivals.

On the geometric instance every arrival doubles the total weight, so exact
fair shares move for every job at every step.  The relaxed allocators trade a
constant factor of fairness for far fewer changes.  The threshold allocator
resets at every doubling, so it gains nothing here; its guarantee is in
expectation over a random arrival order, shown in the second table.

    python3 demos/churn_comparison.py [n]
"""

import sys

from dynfair.simulator import RunConfig, decimal, log_star, run


def main(n: int = 2000) -> None:
    print(f"geometric instance, n={n}, log*(n)={log_star(n)}")
    print(f"{'allocator':<12}{'disruptions':>14}{'max/job':>10}{'worst ratio':>14}")
    for name in ("exact", "threshold", "logstar"):
        rep = run(RunConfig(name, "weighted", f"geometric:{n}", seed=1)).report
        print(f"{name:<12}{rep.total_disruptions:>14}{rep.per_job_max:>10}{decimal(rep.worst_ratio, 4):>14}")

    print("\nrandom arrival order with departures (weights 1..2^9, 50 copies each)")
    for name in ("exact", "threshold"):
        rep = run(RunConfig(name, "weighted", "randperm:pow2=10,repeat=50", seed=7)).report
        print(f"{name:<12}{decimal(rep.mean_per_event, 3):>10} disruptions per event")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 2000)
