"""Command-line front end: ``dynfair gen|run|game|sweep``.

Exit codes: 0 clean, 1 usage or validation error, 2 invariant violation,
3 the opponent of an adversary game lost certification.
"""

from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
from fractions import Fraction
from pathlib import Path

from . import io
from .adversaries import (BatchAdversaryState, RandomPermutationSpec, geometric_instance,
                          random_permutation_stream, run_batch_game, run_monotone_game)
from .core import Arrival, InvalidEventStream, as_frac
from .simulator import (ALLOCATORS, InvariantViolation, RunConfig, UnsupportedCombination, decimal,
                        make_allocator, run, sweep)

log = logging.getLogger("dynfair")

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, EXIT_CERT = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _frac(text: str) -> Fraction:
    try:
        return as_frac(text)
    except (TypeError, ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _seed(args) -> int:
    """The explicit seed, or a fresh one from system entropy (recorded in the report)."""
    return args.seed if args.seed is not None else secrets.randbits(63)


def _report_path(args, name: str):
    if getattr(args, "report", None):
        return Path(args.report)
    if io.REPORT_DIR_ENV in __import__("os").environ:
        return io.report_dir() / name
    return None


# ---------------------------------------------------------------------------
# gen

def cmd_gen(args) -> int:
    seed = _seed(args)
    if args.kind == "batch":
        # the batch adversary is adaptive: emit its game config rather than events
        BatchAdversaryState(args.M, args.b, args.c)
        config = {"format_version": io.FORMAT_VERSION, "adversary": "batch",
                  "M": args.M, "b": args.b, "c": str(args.c)}
        text = json.dumps(config, sort_keys=True)
        if args.out:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        else:
            print(text)
        print(f"batch game config: M={args.M} b={args.b} c={args.c}", file=sys.stderr if not args.out else sys.stdout)
        return EXIT_OK
    if args.kind == "geometric":
        if args.n is None or args.n < 1:
            raise UsageError("geometric needs --n >= 1")
        events = geometric_instance(args.n)
        meta = {"kind": "geometric", "n": args.n}
    else:
        if args.weights_file:
            weights = io.read_weights(args.weights_file)
        elif args.weights:
            weights = [int(w) for w in args.weights.split(",")]
        elif args.pow2:
            weights = [1 << i for i in range(args.pow2)]
        else:
            raise UsageError("randperm needs --weights-file, --weights or --pow2")
        weights = weights * args.repeat
        spec = RandomPermutationSpec(weights, seed=seed, departures=args.departures,
                                     prefix=args.prefix, drain=not args.no_drain)
        events = random_permutation_stream(spec)
        meta = {"kind": "randperm", "seed": seed, "departures": args.departures}
    n = sum(1 for ev in events if isinstance(ev, Arrival))
    total = sum(ev.job.weight for ev in events if isinstance(ev, Arrival))
    summary = f"n={n} events={len(events)} total_weight_bits={total.bit_length()}"
    if args.kind == "randperm":
        summary += f" seed={seed}"
    if args.out:
        io.write_instance(events, args.out, meta)
        print(summary)
    else:
        for ev in events:
            print(json.dumps(io.event_to_dict(ev), sort_keys=True))
        print(summary, file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# run

def cmd_run(args) -> int:
    if bool(args.instance) == bool(args.gen):
        raise UsageError("give exactly one of --instance or --gen")
    seed = _seed(args)
    config = RunConfig(
        allocator=args.alloc, policy=args.policy, instance=args.instance or args.gen,
        epsilon=args.epsilon, n=args.n, doubling=args.doubling, seed=seed,
        strict=args.strict, trace=args.trace_level if args.trace else "none")
    code = EXIT_OK
    try:
        result = run(config)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        result = exc.result
        code = EXIT_VIOLATION
    rep = result.report
    if not rep.clean:
        code = EXIT_VIOLATION
    data = io.report_to_dict(rep, config.describe(), seed=seed, timing=args.timing)
    path = _report_path(args, "run-report.json")
    if path is not None:
        io.write_json(data, path)
    if args.trace:
        io.write_trace(result.trace, args.trace)
    print(f"disruptions={rep.total_disruptions} max_per_job={rep.per_job_max} "
          f"worst_ratio={decimal(rep.worst_ratio)} claimed={rep.claimed_ratio} "
          f"violations={rep.feasibility_violations + rep.approximation_violations}")
    return code


# ---------------------------------------------------------------------------
# game

def cmd_game(args) -> int:
    seed = _seed(args)
    c = args.c if args.c is not None else Fraction(2)
    if args.adversary == "batch":
        if args.M is None or args.b is None:
            raise UsageError("batch game needs --M and --b")
        BatchAdversaryState(args.M, args.b, c)   # validates before the opponent is built
        opponent = make_allocator(args.opponent, 1, seed=seed, epsilon=args.epsilon, n=args.n)
        if not opponent.supports_departures:
            raise UnsupportedCombination(f"{args.opponent} cannot handle the departures of the batch game")
        result = run_batch_game(args.M, args.b, c, opponent)
    else:
        if args.n is None or args.n < 1:
            raise UsageError("monotone game needs --n >= 1")
        eps = args.epsilon if args.epsilon is not None else c - 1
        opponent = make_allocator(args.opponent, 1, seed=seed, epsilon=eps, n=args.n)
        result = run_monotone_game(args.n, c, opponent)
    config = {"adversary": args.adversary, "opponent": args.opponent, "c": str(c),
              "M": args.M, "b": args.b, "n": args.n,
              "epsilon": None if args.epsilon is None else str(args.epsilon)}
    extra = {
        "certified": result.certified,
        "certification_failure": None if result.failure is None
        else {"step": result.failure.step, "reason": result.failure.reason},
        "game": result.details,
    }
    data = io.report_to_dict(result.report, config, seed=seed, timing=args.timing, extra=extra)
    path = _report_path(args, "game-report.json")
    if path is not None:
        io.write_json(data, path)
    rep = result.report
    print(f"certified={result.certified} disruptions={rep.total_disruptions} "
          f"max_per_job={rep.per_job_max} arrivals={rep.arrivals}")
    if not result.certified:
        print(f"certification failure: {result.failure}", file=sys.stderr)
        return EXIT_CERT
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep

_CONFIG_KEYS = {"allocator", "policy", "instance", "epsilon", "n", "doubling", "seed"}


def load_sweep_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"sweep config {path} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"sweep config {path}: {exc}") from None
    if not isinstance(raw, dict) or not isinstance(raw.get("configs"), list) or not raw["configs"]:
        raise UsageError("sweep config needs a non-empty 'configs' list")
    trials = raw.get("trials", 1)
    if not isinstance(trials, int) or trials < 1:
        raise UsageError("'trials' must be a positive integer")
    configs = []
    for i, c in enumerate(raw["configs"]):
        if not isinstance(c, dict) or "instance" not in c:
            raise UsageError(f"config {i}: needs an 'instance'")
        unknown = set(c) - _CONFIG_KEYS
        if unknown:
            raise UsageError(f"config {i}: unknown keys {sorted(unknown)}")
        if c.get("allocator", "exact") not in ALLOCATORS:
            raise UsageError(f"config {i}: unknown allocator {c.get('allocator')!r}")
        kw = dict(c)
        if kw.get("epsilon") is not None:
            kw["epsilon"] = as_frac(str(kw["epsilon"]))
        configs.append(RunConfig(**kw))
    master = raw.get("master_seed")
    return {"configs": configs, "trials": trials, "master_seed": master,
            "workers": int(raw.get("workers", 1))}


def cmd_sweep(args) -> int:
    spec = load_sweep_config(args.config)
    master = spec["master_seed"] if spec["master_seed"] is not None else secrets.randbits(63)
    workers = args.workers or spec["workers"]
    rows, summaries = sweep(spec["configs"], spec["trials"], master, workers=workers)
    io.write_sweep_csv(rows, args.out)
    summary = {
        "format_version": io.FORMAT_VERSION,
        "master_seed": master,
        "trials": spec["trials"],
        "configs": [c.describe() for c in spec["configs"]],
        "summary": [s.__dict__ for s in summaries],
        "failures": [{"config_id": r["config_id"], "seed": r["seed"], "error": r["error"]}
                     for r in rows if r["error"]],
    }
    io.write_json(summary, Path(args.out).with_suffix(".summary.json"))
    for s in summaries:
        lo, hi = s.ci95_per_event
        print(f"config {s.config_id}: mean/event={s.mean_per_event:.4f} (95% CI {lo:.4f}..{hi:.4f}) "
              f"mean/job={s.mean_per_job:.4f} max/job={s.max_per_job} failures={s.failures}")
    print(f"master_seed={master} rows={len(rows)}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynfair", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("kind", choices=["geometric", "batch", "randperm"])
    g.add_argument("--n", type=int)
    g.add_argument("--weights-file")
    g.add_argument("--weights", help="comma-separated integer weights")
    g.add_argument("--pow2", type=int, help="use weights 2^0 .. 2^(K-1)")
    g.add_argument("--repeat", type=int, default=1)
    g.add_argument("--departures", choices=["random", "fifo", "lifo", "none"], default="random")
    g.add_argument("--prefix", type=int)
    g.add_argument("--no-drain", action="store_true")
    g.add_argument("--M", type=int)
    g.add_argument("--b", type=int)
    g.add_argument("--c", type=_frac, default=Fraction(1))
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one allocator on one instance")
    r.add_argument("--alloc", choices=ALLOCATORS, default="exact")
    r.add_argument("--policy", choices=["weighted", "cobbdouglas", "drf"], default="weighted")
    r.add_argument("--instance", help="JSONL instance file")
    r.add_argument("--gen", help="inline generator, e.g. geometric:1000 or randperm:pow2=10,repeat=100")
    r.add_argument("--epsilon", type=_frac)
    r.add_argument("--n", type=int, help="job count known to the light/heavy allocator")
    r.add_argument("--doubling", action="store_true", help="light/heavy without known n")
    r.add_argument("--seed", type=int)
    r.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True,
                   help="halt at the first invariant violation (default) or record and continue")
    r.add_argument("--report")
    r.add_argument("--trace")
    r.add_argument("--trace-level", choices=["delta", "full"], default="delta")
    r.add_argument("--timing", action="store_true", help="include wall time in the report")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("game", help="play an adaptive adversary against an allocator")
    a.add_argument("--adversary", choices=["batch", "monotone"], required=True)
    a.add_argument("--opponent", choices=ALLOCATORS, default="exact")
    a.add_argument("--M", type=int)
    a.add_argument("--b", type=int)
    a.add_argument("--c", type=_frac)
    a.add_argument("--n", type=int)
    a.add_argument("--epsilon", type=_frac)
    a.add_argument("--seed", type=int)
    a.add_argument("--report")
    a.add_argument("--timing", action="store_true")
    a.set_defaults(func=cmd_game)

    s = sub.add_parser("sweep", help="run many configs and trials, write a CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, UnsupportedCombination, InvalidEventStream, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
