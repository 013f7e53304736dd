import io
import json
from pathlib import Path

import pytest

from wfbench import cost
from wfbench.cli import main
from wfbench.sim.trace import read_traces

BENCH_DIR = Path(__file__).resolve().parent.parent / "benchmarks"


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


def test_validate_corpus_file():
    assert run("validate", BENCH_DIR / "mapreduce.json")[0] == 0


def test_validate_dangling_next(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("name: x\nroot: a\nphases:\n  a: {type: task, func: f, next: b}\n")
    code, text = run("validate", p)
    assert code == 1 and "DanglingReference" in text


def test_validate_warning_only(tmp_path):
    p = tmp_path / "wide.yaml"
    p.write_text("name: x\nroot: a\nphases:\n  a: {type: map, func: f, array: xs}\n")
    code, text = run("validate", p, "--fanout", "a=50")
    assert code == 0 and text.startswith("warning")


def test_transcribe_all_platforms(tmp_path):
    code, text = run("transcribe", BENCH_DIR / "mapreduce.json", "--platform", "all", "--out", tmp_path)
    assert code == 0
    assert "aws: transitions/exec: 14" in text
    assert "google: transitions/exec: 54" in text
    assert (tmp_path / "mapreduce.aws.json").is_file()
    assert (tmp_path / "mapreduce.google.yaml").is_file()
    assert (tmp_path / "mapreduce.azure" / "manifest.json").is_file()


def test_transcribe_untranscribable(tmp_path, capsys):
    p = tmp_path / "c.yaml"
    p.write_text(
        "name: b\nroot: sw\nphases:\n"
        "  sw: {type: switch, cases: [{and: [{var: x, op: '==', value: 1}, {var: y, op: '==', value: 2}],"
        " next: a}], default: a}\n"
        "  a: {type: task, func: f}\n"
    )
    code, _ = run("transcribe", p, "--platform", "aws", "--out", tmp_path)
    assert code == 2
    assert "CompoundGuard" in capsys.readouterr().err


def test_simulate_writes_one_record_per_invocation(tmp_path):
    code, _ = run("simulate", BENCH_DIR / "video.json", "--platform", "azure", "--burst", 30, "--reps", 6, "--out", tmp_path)
    assert code == 0
    (run_dir,) = tmp_path.iterdir()
    assert len(read_traces(run_dir / "traces.jsonl")) == 180
    assert json.loads((run_dir / "summary.json").read_text())["invocations"] == 180


def test_simulate_missing_model(tmp_path):
    assert run("simulate", BENCH_DIR / "video.json", "--model", tmp_path / "nope.json", "--out", tmp_path)[0] == 2


def test_config_file_sets_flags(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"burst": 2, "reps": 1, "model": "aws-like", "out": str(tmp_path / "o")}))
    assert run("--config", cfg, "simulate", BENCH_DIR / "ml.json")[0] == 0
    (run_dir,) = (tmp_path / "o").iterdir()
    assert len(read_traces(run_dir / "traces.jsonl")) == 2


def test_analyze_report(tmp_path):
    run("simulate", BENCH_DIR / "video.json", "--platform", "aws", "--burst", 5, "--reps", 2, "--out", tmp_path)
    code, _ = run("analyze", tmp_path)
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    traces = read_traces(next(tmp_path.rglob("traces.jsonl")))
    assert report["models"]["aws-like"]["cost"] == cost.estimate(traces, platform="aws").to_dict()
    rows = (tmp_path / "decomposition.csv").read_text().splitlines()[1:]
    for row in rows:
        _, _, tc, to, total, _ = row.split(",")
        assert int(tc) + int(to) == int(total)


def test_analyze_empty_dir(tmp_path):
    assert run("analyze", tmp_path)[0] == 2


def test_bad_usage():
    assert run("simulate")[0] == 2


def test_net_export():
    code, text = run("net", BENCH_DIR / "video.json")
    assert code == 0 and "transition f:acc function" in text
