import csv
import json
import subprocess
import sys

import pytest

from dynfair import io
from dynfair.adversaries import RandomPermutationSpec, random_permutation_stream
from dynfair.cli import main
from dynfair.core import Arrival, Departure, InvalidEventStream, Job


def _json(path):
    return json.loads(path.read_text())


def test_gen_geometric(tmp_path, capsys):
    out = tmp_path / "g.jsonl"
    assert main(["gen", "geometric", "--n", "3", "--out", str(out)]) == 0
    lines = [json.loads(x) for x in out.read_text().splitlines()]
    assert lines[0]["format_version"] == 1
    assert [d["w"] for d in lines[1:]] == ["1", "2", "4"]
    assert "n=3" in capsys.readouterr().out


def test_gen_geometric_invalid(capsys):
    assert main(["gen", "geometric", "--n", "0"]) == 1
    assert "error" in capsys.readouterr().err


def test_gen_randperm_weights_file_is_deterministic(tmp_path):
    wfile = tmp_path / "w.txt"
    wfile.write_text("1 2 4 8\n16 32\n")
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        assert main(["gen", "randperm", "--weights-file", str(wfile), "--seed", "7", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    events = io.read_instance(a)
    assert sorted(e.job.weight for e in events if isinstance(e, Arrival)) == [1, 2, 4, 8, 16, 32]


def test_gen_then_run_equals_inline(tmp_path):
    inst = tmp_path / "r.jsonl"
    main(["gen", "randperm", "--pow2", "6", "--repeat", "5", "--seed", "3", "--out", str(inst)])
    r1, r2 = tmp_path / "file.json", tmp_path / "inline.json"
    assert main(["run", "--alloc", "exact", "--instance", str(inst), "--seed", "3", "--report", str(r1)]) == 0
    assert main(["run", "--alloc", "exact", "--gen", "randperm:pow2=6,repeat=5", "--seed", "3",
                 "--report", str(r2)]) == 0
    a, b = _json(r1), _json(r2)
    a.pop("config"), b.pop("config")
    assert a == b


def test_gen_batch_emits_config(tmp_path):
    out = tmp_path / "batch.json"
    assert main(["gen", "batch", "--M", "1024", "--b", "4", "--out", str(out)]) == 0
    assert _json(out) == {"format_version": 1, "adversary": "batch", "M": 1024, "b": 4, "c": "1"}
    assert main(["gen", "batch", "--M", "10", "--b", "4"]) == 1


def test_run_exact_geometric(tmp_path):
    rep = tmp_path / "r.json"
    assert main(["run", "--alloc", "exact", "--gen", "geometric:1000", "--report", str(rep)]) == 0
    data = _json(rep)
    assert data["totals"]["total_disruptions"] == 499500
    assert data["worst_ratio"] == "1/1"
    assert "wall_time_s" not in data
    assert isinstance(data["seed"], int)


def test_run_logstar_report(tmp_path):
    rep = tmp_path / "r.json"
    assert main(["run", "--alloc", "logstar", "--gen", "geometric:1000", "--seed", "1", "--report", str(rep)]) == 0
    data = _json(rep)
    num, den = map(int, data["worst_ratio"].split("/"))
    assert num <= 24 * den
    assert data["violations"]["feasibility"] == 0


def test_run_logstar_with_departures_exits_1(tmp_path, capsys):
    inst = tmp_path / "dep.jsonl"
    io.write_instance([Arrival(1, Job(1)), Departure(2, 1)], inst)
    assert main(["run", "--alloc", "logstar", "--instance", str(inst)]) == 1
    assert "arrival-only" in capsys.readouterr().err


def test_run_strict_violation_exits_2(tmp_path):
    rep = tmp_path / "r.json"
    # claimed 1+eps = 1 + 1/1000 while a cap of n = 1 makes every later job light at once
    code = main(["run", "--alloc", "lightheavy", "--gen", "geometric:20", "--n", "1", "--epsilon", "1/1000",
                 "--report", str(rep)])
    data = _json(rep)
    assert code == 2 and data["aborted"] and data["violations"]["first"] is not None
    code = main(["run", "--alloc", "lightheavy", "--gen", "geometric:20", "--n", "1", "--epsilon", "1/1000",
                 "--no-strict", "--report", str(rep)])
    data = _json(rep)
    assert code == 2 and not data["aborted"] and data["violations"]["feasibility"] > 0


def test_run_trace_levels(tmp_path):
    tr = tmp_path / "t.jsonl"
    assert main(["run", "--alloc", "threshold", "--gen", "randperm:pow2=4", "--seed", "2",
                 "--trace", str(tr), "--trace-level", "full"]) == 0
    lines = [json.loads(x) for x in tr.read_text().splitlines()]
    assert lines[0] == {"format_version": 1, "kind": "trace"}
    assert all("snapshot" in d for d in lines[1:])


def test_run_needs_one_instance_source(capsys):
    assert main(["run", "--alloc", "exact"]) == 1
    assert main(["run", "--alloc", "bogus", "--gen", "geometric:3"]) == 1


def test_report_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(io.REPORT_DIR_ENV, str(tmp_path))
    assert main(["run", "--gen", "geometric:5", "--seed", "0"]) == 0
    assert (tmp_path / "run-report.json").exists()


def test_game_batch(tmp_path):
    rep = tmp_path / "g.json"
    assert main(["game", "--adversary", "batch", "--opponent", "exact", "--M", "1024", "--b", "4", "--c", "1",
                 "--seed", "0", "--report", str(rep)]) == 0
    data = _json(rep)
    assert data["certified"] and data["totals"]["total_disruptions"] >= 1536
    assert main(["game", "--adversary", "batch", "--M", "10", "--b", "4", "--c", "1"]) == 1


def test_game_monotone(tmp_path):
    rep = tmp_path / "m.json"
    assert main(["game", "--adversary", "monotone", "--opponent", "lightheavy", "--n", "256", "--c", "2",
                 "--seed", "0", "--report", str(rep)]) == 0
    data = _json(rep)
    assert data["certified"] and data["game"]["bound_holds"]
    assert data["per_job"]["max"] >= data["game"]["d_min"]


def test_game_certification_failure_exits_3(tmp_path):
    rep = tmp_path / "f.json"
    # the threshold allocator is only 4-approximate, so a c = 2 monotone game catches it
    code = main(["game", "--adversary", "monotone", "--opponent", "threshold", "--n", "64", "--c", "2",
                 "--seed", "1", "--report", str(rep)])
    assert code == 3
    assert _json(rep)["certified"] is False


def test_sweep(tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"master_seed": 4, "trials": 3, "configs": [
        {"allocator": "threshold", "instance": "randperm:pow2=5,repeat=2"},
        {"allocator": "exact", "instance": "randperm:pow2=5,repeat=2"}]}))
    out = tmp_path / "s.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 6
    assert list(rows[0]) == ["config_id", "seed", "n", "arrivals", "departures", "total_disruptions",
                             "max_per_job", "mean_per_event", "worst_ratio_decimal", "feasible"]
    summary = _json(tmp_path / "s.summary.json")
    assert summary["master_seed"] == 4


def test_sweep_single_matches_run(tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"master_seed": 1, "trials": 1, "configs": [
        {"allocator": "threshold", "instance": "randperm:pow2=5,repeat=2", "seed": 11}]}))
    out = tmp_path / "s.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    row = next(csv.DictReader(out.open()))
    rep = tmp_path / "r.json"
    main(["run", "--alloc", "threshold", "--gen", "randperm:pow2=5,repeat=2", "--seed", "11", "--report", str(rep)])
    data = _json(rep)
    assert int(row["total_disruptions"]) == data["totals"]["total_disruptions"]
    assert row["mean_per_event"] == data["totals"]["mean_per_event_decimal"]


def test_sweep_bad_configs(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "x.csv")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"configs": [{"allocator": "exact"}]}))
    assert main(["sweep", "--config", str(bad), "--out", str(tmp_path / "x.csv")]) == 1
    bad.write_text(json.dumps({"configs": [{"instance": "geometric:3", "colour": "red"}]}))
    assert main(["sweep", "--config", str(bad), "--out", str(tmp_path / "x.csv")]) == 1


def test_instance_roundtrip(tmp_path):
    events = random_permutation_stream(RandomPermutationSpec([1, 3, 10 ** 40], seed=0))
    path = tmp_path / "i.jsonl"
    io.write_instance(events, path)
    assert io.read_instance(path) == events


def test_instance_parse_errors(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"t": 1, "op": "arrive", "id": 1, "w": "1.5"}\n')
    with pytest.raises(InvalidEventStream):
        io.read_instance(path)
    path.write_text('{"t": 1, "op": "depart", "id": 1}\n')
    with pytest.raises(InvalidEventStream, match="dangling"):
        io.read_instance(path)
    path.write_text('{"format_version": 2}\n')
    with pytest.raises(InvalidEventStream):
        io.read_instance(path)


def test_parse_spec():
    assert io.parse_spec("geometric:10") == ("geometric", {"n": "10"})
    assert io.parse_spec("randperm:pow2=3,repeat=2") == ("randperm", {"pow2": "3", "repeat": "2"})


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dynfair", "gen", "geometric", "--n", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert len(proc.stdout.splitlines()) == 2
