import json

import pytest

from cslsh.cli import main, parse_config_file, resolve_config, run_query_experiment
from cslsh.data import FormatError


def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        """
# experiment settings
algorithm = table-cs
n = 64            # small
delta = 0.25
queries_from_data = true
"""
    )
    parsed = parse_config_file(str(cfg))
    assert parsed["algorithm"] == "table-cs"
    resolved = resolve_config(str(cfg), {})
    assert resolved["n"] == 64
    assert resolved["delta"] == 0.25
    assert resolved["queries_from_data"] is True
    # command-line overrides win over file values
    resolved2 = resolve_config(str(cfg), {"n": 128})
    assert resolved2["n"] == 128


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus_key = 1\n")
    with pytest.raises(FormatError):
        resolve_config(str(cfg), {})


def test_generate_build_query_round_trip(tmp_path):
    prefix = str(tmp_path / "inst")
    assert main([
        "generate", "--instance", "planted-nn", "-n", "80", "--dim", "32",
        "--queries", "10", "--instance-seed", "4", "--out", prefix,
    ]) == 0
    forest_path = str(tmp_path / "f.bin")
    assert main([
        "build", "--instance", f"file:{prefix}", "--metric", "hamming",
        "-k", "8", "-l", "4", "--seed", "2", "--out", forest_path,
        "--structure", "forest",
    ]) == 0
    report = str(tmp_path / "rep.jsonl")
    assert main([
        "query", "--instance", f"file:{prefix}", "--metric", "hamming",
        "--algorithm", "brute", "--seed", "2", "--out", report,
    ]) == 0
    lines = open(report).read().strip().split("\n")
    header = json.loads(lines[0])
    assert "config" in header
    rows = [json.loads(line) for line in lines[1:]]
    assert len(rows) == 10
    assert all(r["returned"] == r["true"] for r in rows)  # brute recall 1.0


def test_build_rejects_zero_levels(tmp_path):
    rc = main([
        "build", "--instance", "uniform-hamming", "-n", "16", "--dim", "8",
        "--queries", "2", "-k", "0", "-l", "2", "--out", str(tmp_path / "x.bin"),
    ])
    assert rc == 1


def test_build_deterministic_bytes(tmp_path):
    args = [
        "build", "--instance", "uniform-hamming", "-n", "32", "--dim", "16",
        "--queries", "2", "--instance-seed", "9", "-k", "6", "-l", "3",
        "--seed", "7", "--structure", "forest",
    ]
    a, b = str(tmp_path / "a.bin"), str(tmp_path / "b.bin")
    assert main(args + ["--out", a]) == 0
    assert main(args + ["--out", b]) == 0
    assert open(a, "rb").read() == open(b, "rb").read()


def test_reports_are_deterministic():
    overrides = {
        "instance": "planted-nn", "n": 100, "dim": 32, "queries": 20,
        "instance_seed": 3, "algorithm": "table-cs", "delta": 0.25,
        "k_cat": 8, "seed": 11,
    }
    rows1, summary1 = run_query_experiment(dict(overrides))
    rows2, summary2 = run_query_experiment(dict(overrides))
    assert rows1 == rows2
    assert summary1["recall"] == summary2["recall"]
    # wall time stays out of the rows unless explicitly requested
    assert "wall_ms" not in rows1[1]
    rows3, _ = run_query_experiment(dict(overrides, timings=True))
    assert "wall_ms" in json.loads(rows3[1])


def test_report_work_equals_module_counters():
    rows, _ = run_query_experiment({
        "instance": "uniform-hamming", "n": 64, "dim": 16, "queries": 6,
        "instance_seed": 2, "algorithm": "forest-adaptive", "k": 8, "l": 64,
        "seed": 4,
    })
    for line in rows[1:]:
        row = json.loads(line)
        assert row["work"] == row["hash_evaluations"] + row["collisions_inspected"]
        assert row["work"] == row["total_work"]


def test_budgeted_algorithm_runs():
    rows, summary = run_query_experiment({
        "instance": "planted-nn", "n": 100, "dim": 32, "queries": 15,
        "instance_seed": 3, "algorithm": "budgeted-cs", "delta": 0.125,
        "k_cat": 8, "l": 32, "l_max": 32, "seed": 11,
    })
    assert summary["recall"] >= 0.8


def test_natural_algorithm_config():
    rows, summary = run_query_experiment({
        "instance": "uniform-hamming", "n": 64, "dim": 16, "queries": 10,
        "instance_seed": 5, "algorithm": "natural", "k": 6, "l": 4,
        "natural_level": 0, "natural_trees": 1, "seed": 1,
    })
    assert summary["recall"] == 1.0  # level 0 is a full scan
    row = json.loads(rows[1])
    assert row["work"] == 64


def test_unknown_algorithm_exits_nonzero(tmp_path, capsys):
    rc = main([
        "query", "--instance", "uniform-hamming", "-n", "16", "--dim", "8",
        "--queries", "2", "--algorithm", "nope", "--seed", "1",
        "--out", str(tmp_path / "r.jsonl"),
    ])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_verify_unknown_suite():
    assert main(["verify", "nope"]) == 1


def test_bench_brute_only(tmp_path, capsys):
    rc = main([
        "bench", "--algorithms", "brute", "--instances", "uniform-hamming",
        "--sizes", "32,64", "--queries", "5", "--dim", "16", "--seed", "3",
        "--out", str(tmp_path / "cells"),
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "1.0000" in out
    assert (tmp_path / "cells" / "brute_uniform-hamming_32.jsonl").exists()


def test_bench_records_partial_failures(capsys):
    rc = main([
        "bench", "--algorithms", "brute,nope", "--instances", "uniform-hamming",
        "--sizes", "32", "--queries", "4", "--dim", "16", "--seed", "3",
    ])
    assert rc == 0  # one cell failed, the sweep still completed
    out = capsys.readouterr().out
    assert "ERROR" in out and "1.0000" in out


def test_query_from_serialized_structure(tmp_path):
    prefix = str(tmp_path / "inst")
    assert main([
        "generate", "--instance", "uniform-hamming", "-n", "64", "--dim", "16",
        "--queries", "12", "--instance-seed", "6", "--out", prefix,
    ]) == 0
    ens_path = str(tmp_path / "ens.bin")
    common = [
        "--instance", f"file:{prefix}", "--metric", "hamming",
        "-k", "8", "-l", "64", "--seed", "21",
    ]
    assert main(["build", *common, "--structure", "ensemble", "--out", ens_path]) == 0
    rep_mem = str(tmp_path / "mem.jsonl")
    rep_file = str(tmp_path / "file.jsonl")
    assert main(["query", *common, "--algorithm", "forest-adaptive", "--out", rep_mem]) == 0
    assert main([
        "query", *common, "--algorithm", "forest-adaptive",
        "--structure-file", ens_path, "--out", rep_file,
    ]) == 0
    # loading the serialized ensemble gives query-identical results
    assert open(rep_mem).read() == open(rep_file).read()


def test_repetitions_rerun_queries_with_fresh_seeds():
    rows, summary = run_query_experiment({
        "instance": "uniform-hamming", "n": 48, "dim": 16, "queries": 5,
        "instance_seed": 8, "algorithm": "table-cs", "delta": 0.25,
        "k_cat": 6, "seed": 13, "repetitions": 3,
    })
    assert summary["repetitions"] == 3
    body = [json.loads(r) for r in rows[1:]]
    assert len(body) == 15
    assert {r["rep"] for r in body} == {0, 1, 2}


def test_report_is_self_contained():
    # re-running from the embedded config record reproduces the report
    overrides = {
        "instance": "planted-nn", "n": 120, "dim": 32, "queries": 15,
        "instance_seed": 31, "algorithm": "forest-adaptive", "k": 12,
        "l": 128, "seed": 17,
    }
    rows, _ = run_query_experiment(dict(overrides))
    embedded = json.loads(rows[0])["config"]
    rows2, _ = run_query_experiment(embedded)
    assert rows == rows2
