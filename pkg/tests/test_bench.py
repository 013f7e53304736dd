import json
from collections import Counter
from pathlib import Path

import pytest

from wfbench import bench
from wfbench.definition import parse_definition, serialize, validate
from wfbench.sim.engine import Simulator
from wfbench.sim.model import load_model

BENCH_DIR = Path(__file__).resolve().parent.parent / "benchmarks"
SPECS = bench.all_benchmarks()


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_shipped_document_matches_corpus(spec):
    doc = (BENCH_DIR / f"{spec.name}.json").read_text()
    assert parse_definition(doc) == spec.definition
    assert doc == serialize(spec.definition, "json")
    assert json.loads((BENCH_DIR / f"{spec.name}.input.json").read_text()) == spec.canonical_input


def test_every_shipped_document_belongs_to_the_corpus():
    shipped = {p.name.split(".")[0] for p in BENCH_DIR.glob("*.json")}
    assert shipped == {s.name for s in SPECS}


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_corpus_validates_and_runs(spec):
    assert validate(spec.definition, spec.canonical_fanouts).ok
    sim = Simulator(load_model("aws-like"), spec.kernels, seed=1)
    spec.prepare(sim.objects)
    trace = sim.run(spec.definition, spec.canonical_input)
    assert trace.status == "succeeded"
    assert len(trace.events) == spec.triple[0]


def test_mapreduce_counts_words():
    spec = bench.mapreduce()
    trace = Simulator(load_model("aws-like"), spec.kernels).run(spec.definition, spec.canonical_input)
    p = spec.params
    expected = Counter(bench.make_corpus(p["W"], p["M"], p["seed"]))
    assert {r["word"]: r["total"] for r in trace.output} == expected


def _trip(fail):
    spec = bench.trip_booking(fail_at_confirm=fail)
    sim = Simulator(load_model("aws-like"), spec.kernels)
    trace = sim.run(spec.definition, spec.canonical_input)
    return sim.kv, trace


def test_trip_compensates_after_failed_confirm():
    kv, trace = _trip(True)
    assert len(kv) == 0
    assert [e.function for e in trace.events if e.function.startswith("cancel")] == [
        "cancel_flight", "cancel_car", "cancel_hotel"
    ]


def test_trip_happy_path_keeps_reservations():
    kv, trace = _trip(False)
    assert len(kv) == 3
    assert all(item["status"] == "confirmed" for _, _, item in kv.items())


def test_repeated_trip_requests_in_one_burst_do_not_collide():
    spec = bench.trip_booking(fail_at_confirm=False)
    sim = Simulator(load_model("aws-like"), spec.kernels)
    traces = sim.run_burst(spec.definition, [spec.canonical_input], 4)
    assert all(t.status == "succeeded" for t in traces)
    assert len(sim.kv) == 12


def test_unknown_benchmark():
    with pytest.raises(KeyError, match="unknown benchmark"):
        bench.get("nope")


def test_kernels_for_finds_by_workflow_name():
    assert bench.kernels_for("genome").name == "genome"
    assert bench.kernels_for("unknown") is None
