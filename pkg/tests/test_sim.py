import io

import pytest

from wfbench import bench
from wfbench.definition import parse_definition
from wfbench.sim.engine import KernelResult, MissingKernel, Simulator
from wfbench.sim.model import Latency, PlatformModel, load_model
from wfbench.sim.stores import DuplicateKey, KeyValueStore, MissingItem, MissingObject, ObjectStore
from wfbench.sim.trace import TraceFormatError, read_traces, write_traces

TASK = parse_definition("name: t\nroot: a\nphases:\n  a: {type: task, func: f}\n")
MAP = parse_definition("name: m\nroot: a\nphases:\n  a: {type: map, func: f, array: xs}\n")
ONE_MS = {"f": lambda payload, ctx: KernelResult(payload, 1000)}
FIXED = PlatformModel(name="fixed", cold_start=Latency(kind="fixed", value=100))


def test_cold_then_warm_on_the_same_container():
    sim = Simulator(FIXED, ONE_MS, seed=1)
    first, second = sim.run(TASK, {}), sim.run(TASK, {})
    assert (first.total_runtime, second.total_runtime) == (101_000, 1_000)
    assert [e.cold for e in first.events + second.events] == [True, False]


def test_container_cap_serializes_a_map():
    trace = Simulator(FIXED.with_(container_cap=1), ONE_MS).run(MAP, {"xs": [1, 2]})
    a, b = trace.events
    assert b.acquired == a.end and not b.cold
    assert trace.output == [1, 2]


@pytest.mark.parametrize("name,expected", [("aws-like", 30), ("gcp-like", 30), ("azure-like", 10)])
def test_burst_container_counts(name, expected):
    traces = Simulator(load_model(name), ONE_MS).run_burst(TASK, [{}], 30)
    assert len({e.container for t in traces for e in t.events}) == expected


def test_same_seed_same_trace():
    spec = bench.excamera()

    def once():
        sim = Simulator(load_model("gcp-like"), spec.kernels, seed=5)
        spec.prepare(sim.objects)
        buf = io.StringIO()
        write_traces(buf, sim.run_burst(spec.definition, [spec.canonical_input], 3))
        return buf.getvalue()

    assert once() == once()


def test_trace_round_trip():
    trace = Simulator(FIXED, ONE_MS).run(MAP, {"xs": [1, 2]})
    buf = io.StringIO()
    write_traces(buf, [trace])
    buf.seek(0)
    assert read_traces(buf) == [trace]


def test_malformed_trace_line():
    with pytest.raises(TraceFormatError):
        read_traces(io.StringIO("not json\n"))


def test_missing_kernel_is_caught_before_running():
    with pytest.raises(MissingKernel):
        Simulator(FIXED, {}).run(TASK, {})


def test_large_payloads_pay_storage_round_trip():
    big = {"f": lambda payload, ctx: KernelResult("x", 1000, output_bytes=10_000)}
    model = FIXED.with_(payload_channel_threshold_bytes=100, storage_latency_ms=7)
    two = parse_definition("name: t\nroot: a\nphases:\n  a: {type: task, func: f, next: b}\n  b: {type: task, func: f}\n")
    slow = Simulator(model, big).run(two, {}).total_runtime
    fast = Simulator(FIXED, big).run(two, {}).total_runtime
    assert slow > fast


def test_unknown_model_file():
    with pytest.raises(FileNotFoundError):
        load_model("no-such-model.json")


def test_model_round_trips_through_dict():
    m = load_model("azure-like")
    assert PlatformModel.from_dict(m.to_dict()) == m


def test_failed_kernel_without_handler_marks_trace_failed():
    def boom(payload, ctx):
        from wfbench.sim.engine import KernelError

        raise KernelError("nope")

    trace = Simulator(FIXED, {"f": boom}).run(TASK, {})
    assert trace.status == "failed"


def test_key_value_store_errors():
    kv = KeyValueStore()
    kv.create("t", "k", {"a": 1})
    with pytest.raises(DuplicateKey):
        kv.create("t", "k", {"a": 2})
    kv.delete("t", "k")
    with pytest.raises(MissingItem):
        kv.modify("t", "k", {"a": 3})
    assert [op.op for op in kv.log] == ["insert", "delete"]


def test_object_store_missing_key():
    with pytest.raises(MissingObject):
        ObjectStore().get("absent")
