"""Instance, trace and report files.

Weights are written as decimal integer strings and rationals as ``"p/q"``
strings, so nothing is rounded on the way to disk.  Every format carries
``"format_version": 1``.
"""

from __future__ import annotations

import csv
import json
import os
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import Arrival, Departure, Event, InvalidEventStream, Job, as_frac, validate_event_stream

FORMAT_VERSION = 1
REPORT_DIR_ENV = "DYNFAIR_REPORT_DIR"


def frac_str(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


# ---------------------------------------------------------------------------
# instances

def event_to_dict(ev: Event) -> dict:
    if isinstance(ev, Arrival):
        d = {"t": ev.time, "op": "arrive", "id": ev.job.id, "w": str(ev.job.weight)}
        if ev.job.demands is not None:
            d["demands"] = [frac_str(x) for x in ev.job.demands]
        return d
    return {"t": ev.time, "op": "depart", "id": ev.job_id}


def event_from_dict(d: dict, index: int = 0) -> Event:
    try:
        t, op, jid = d["t"], d["op"], d["id"]
    except KeyError as exc:
        raise InvalidEventStream(index, f"missing field {exc.args[0]!r}") from None
    if not isinstance(t, int) or not isinstance(jid, int):
        raise InvalidEventStream(index, "t and id must be integers")
    if op == "arrive":
        w = d.get("w", "1")
        if not isinstance(w, str) or not w.isdigit():
            raise InvalidEventStream(index, f"weight {w!r} is not a decimal integer string")
        demands = d.get("demands")
        if demands is not None:
            try:
                demands = tuple(as_frac(x) for x in demands)
            except (TypeError, ValueError, ZeroDivisionError) as exc:
                raise InvalidEventStream(index, f"bad demands: {exc}") from None
        try:
            job = Job(jid, int(w), arrival_index=t, demands=demands)
        except (TypeError, ValueError) as exc:
            raise InvalidEventStream(index, str(exc)) from None
        return Arrival(t, job)
    if op == "depart":
        return Departure(t, jid)
    raise InvalidEventStream(index, f"unknown op {op!r}")


def write_instance(events: Iterable[Event], path, meta: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {"format_version": FORMAT_VERSION}
        if meta:
            header.update(meta)
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for ev in events:
            fh.write(json.dumps(event_to_dict(ev), sort_keys=True) + "\n")


def read_instance(path) -> list[Event]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidEventStream(len(events), f"line {lineno + 1}: {exc}") from None
            if "format_version" in d:
                if d["format_version"] != FORMAT_VERSION:
                    raise InvalidEventStream(len(events), f"unsupported format_version {d['format_version']}")
                continue
            events.append(event_from_dict(d, len(events)))
    validate_event_stream(events)
    return events


# ---------------------------------------------------------------------------
# inline generator specs: "kind:key=value,key=value" or "geometric:1000"

def parse_spec(text: str) -> tuple[str, dict[str, str]]:
    kind, _, rest = text.partition(":")
    params: dict[str, str] = {}
    for part in filter(None, rest.split(",")):
        key, eq, value = part.partition("=")
        if not eq:
            if "n" in params:
                raise ValueError(f"cannot parse {part!r} in {text!r}")
            key, value = "n", part
        params[key.strip()] = value.strip()
    return kind.strip(), params


def _int(params, key, default=None) -> int:
    if key not in params:
        if default is None:
            raise ValueError(f"missing parameter {key!r}")
        return default
    return int(params[key])


def read_weights(path) -> list[int]:
    text = Path(path).read_text(encoding="utf-8")
    weights = [int(tok) for tok in text.replace(",", " ").split()]
    if not weights:
        raise ValueError(f"{path}: no weights")
    return weights


def randperm_weights(params: dict) -> list[int]:
    if "weights-file" in params:
        base = read_weights(params["weights-file"])
    elif "weights" in params:
        base = [int(w) for w in params["weights"].split("/")]
    elif "pow2" in params:
        base = [1 << i for i in range(_int(params, "pow2"))]
    else:
        raise ValueError("randperm needs weights=, weights-file= or pow2=")
    return base * _int(params, "repeat", 1)


def random_exponents(n: int, dims: int, rng: np.random.Generator, resolution: int = 100) -> list[tuple]:
    """Positive rational vectors summing to exactly 1."""
    out = []
    for _ in range(n):
        raw = [int(x) for x in rng.integers(1, resolution + 1, size=dims)]
        total = sum(raw)
        out.append(tuple(Fraction(r, total) for r in raw))
    return out


def resolve_instance(source, seed: Optional[int] = None) -> list[Event]:
    """Turn an event list, a JSONL path or an inline generator spec into events."""
    from .adversaries import RandomPermutationSpec, geometric_instance, random_permutation_stream

    if source is None:
        return []
    if isinstance(source, list):
        return source
    source = str(source)
    kind, params = parse_spec(source)
    if kind == "geometric" and ":" in source:
        return geometric_instance(_int(params, "n"))
    if kind == "randperm" and ":" in source:
        spec = RandomPermutationSpec(
            randperm_weights(params), seed=0 if seed is None else seed,
            departures=params.get("departures", "random"),
            prefix=int(params["prefix"]) if "prefix" in params else None,
            drain=params.get("drain", "1") not in ("0", "false", "no"))
        return random_permutation_stream(spec)
    if kind in ("cobbdouglas", "drf") and ":" in source:
        n, dims = _int(params, "n"), _int(params, "d", 2)
        rng = np.random.default_rng([0 if seed is None else seed, 2])
        if kind == "cobbdouglas":
            vecs = random_exponents(n, dims, rng)
            weights = [1] * n
        else:
            hi = _int(params, "max", 4)
            vecs = [tuple(Fraction(int(x)) for x in rng.integers(1, hi + 1, size=dims)) for _ in range(n)]
            weights = [int(x) for x in rng.integers(1, _int(params, "wmax", 3) + 1, size=n)]
        return [Arrival(i, Job(i, weights[i - 1], arrival_index=i, demands=vecs[i - 1])) for i in range(1, n + 1)]
    if os.path.exists(source):
        return read_instance(source)
    raise ValueError(f"no instance file or generator named {source!r}")


# ---------------------------------------------------------------------------
# reports and traces

def report_dir(explicit: Optional[str] = None) -> Path:
    return Path(explicit or os.environ.get(REPORT_DIR_ENV) or ".")


def report_to_dict(report, config: Optional[dict] = None, seed=None, timing: bool = False,
                   extra: Optional[dict] = None) -> dict:
    from .simulator import decimal

    d = {
        "format_version": FORMAT_VERSION,
        "config": config or {},
        "seed": seed,
        "totals": {
            "total_disruptions": report.total_disruptions,
            "arrivals": report.arrivals,
            "departures": report.departures,
            "events": report.events,
            "steps": report.steps,
            "mean_per_event": frac_str(report.mean_per_event),
            "mean_per_event_decimal": decimal(report.mean_per_event),
            "per_dimension_disruptions": report.per_dimension_disruptions,
        },
        "per_job": {
            "min": report.per_job_min,
            "mean": frac_str(report.per_job_mean),
            "max": report.per_job_max,
            "histogram": {str(k): v for k, v in report.histogram.items()},
        },
        "worst_ratio": None if report.worst_ratio is None else frac_str(report.worst_ratio),
        "worst_ratio_decimal": decimal(report.worst_ratio) if report.worst_ratio is not None else None,
        "claimed_ratio": frac_str(report.claimed_ratio),
        "max_total_allocation": [frac_str(x) for x in report.max_total_allocation],
        "violations": {
            "feasibility": report.feasibility_violations,
            "approximation": report.approximation_violations,
            "first": None if report.first_violation is None
            else {"t": report.first_violation[0], "reason": report.first_violation[1]},
        },
        "clean": report.clean,
        "aborted": report.aborted,
    }
    if extra:
        d.update(extra)
    if timing:
        d["wall_time_s"] = report.wall_time
    return d


def write_json(data: dict, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trace(trace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format_version": FORMAT_VERSION, "kind": "trace"}) + "\n")
        for step in trace:
            d = {
                "t": step.time,
                "arrive": step.arrivals,
                "depart": step.departures,
                "changes": [{str(j): frac_str(a) for j, a in ch.items()} for ch in step.changes],
            }
            if step.snapshots is not None:
                d["snapshot"] = [{str(j): [frac_str(a), frac_str(s)] for j, (a, s) in snap.entries.items()}
                                 for snap in step.snapshots]
            fh.write(json.dumps(d, sort_keys=True) + "\n")


def write_sweep_csv(rows: Sequence[dict], path) -> None:
    from .simulator import SWEEP_COLUMNS

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
