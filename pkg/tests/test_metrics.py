from fractions import Fraction

import numpy as np
import pytest

from wfbench.definition import parse_definition
from wfbench.metrics import (
    DomainError,
    EmptyTrace,
    TooFewSamples,
    cold_fraction,
    critical_path,
    median_ci,
    median_ci_ranks,
    normalize_critical_path,
    phase_runtimes,
    scaling_profile,
    selfish_detour,
)
from wfbench.sim.engine import KernelResult, Simulator
from wfbench.sim.model import Latency, PlatformModel, load_model
from wfbench.sim.trace import ExecutionTrace

FIXED = PlatformModel(name="fixed", cold_start=Latency(kind="fixed", value=100))


def kernels(ms):
    return {f: (lambda d: lambda payload, ctx: KernelResult(payload, d * 1000))(d) for f, d in ms.items()}


def test_chain_then_parallel_branches():
    defn = parse_definition(
        "name: p\nroot: a\nphases:\n"
        "  a: {type: task, func: f, next: par}\n"
        "  par: {type: parallel, branches: [[x1, x2], [y]]}\n"
        "  x1: {type: task, func: g, next: x2}\n"
        "  x2: {type: task, func: g}\n"
        "  y: {type: task, func: h}\n"
    )
    trace = Simulator(FIXED, kernels({"f": 2, "g": 3, "h": 5})).run(defn, {})
    d = critical_path(trace)
    # f, then max(g+g, h)
    assert d.T_C == 2000 + 6000
    assert d.T_C + d.T_O == d.total == trace.total_runtime


def test_map_counts_only_the_longest_element():
    defn = parse_definition("name: m\nroot: a\nphases:\n  a: {type: map, func: f, array: xs}\n")

    def k(payload, ctx):
        return KernelResult(payload, payload * 1000)

    trace = Simulator(FIXED, {"f": k}).run(defn, {"xs": [1, 4, 2]})
    assert critical_path(trace).T_C == 4000
    (phase,) = phase_runtimes(trace)
    assert phase.phase == "a"


def test_empty_trace():
    with pytest.raises(EmptyTrace):
        critical_path(ExecutionTrace("i", "w", "m", "generic", 0))


def test_normalize_rounds_half_to_even():
    assert normalize_critical_path(5, "0.5") == 2
    assert normalize_critical_path(7, "0.5") == 4
    assert normalize_critical_path(1_000_000, Fraction(1, 10)) == 900_000


def test_normalize_domain():
    with pytest.raises(DomainError):
        normalize_critical_path(10, 1)


def test_scaling_profile_respects_cap():
    task = parse_definition("name: t\nroot: a\nphases:\n  a: {type: task, func: f}\n")
    traces = Simulator(load_model("azure-like"), kernels({"f": 1})).run_burst(task, [{}], 30)
    prof = scaling_profile(traces)
    assert prof.max == 10
    assert prof.points[-1][1] == 0
    assert prof.area() > 0
    assert 0 < cold_fraction(traces) < 1


def test_median_ci_ranks_for_thirty():
    low, high, mass = median_ci_ranks(30, 0.95)
    assert (low, high) == (10, 21)
    assert mass >= Fraction(95, 100)


def test_median_ci_brackets_sample_median():
    x = np.random.default_rng(3).lognormal(size=51)
    ci = median_ci(x)
    assert ci.low <= np.median(x) <= ci.high
    assert ci.coverage >= 0.95


def test_too_few_samples():
    with pytest.raises(TooFewSamples):
        median_ci([1.0, 2.0, 3.0])


@pytest.mark.parametrize("share", [0.1, 0.25])
def test_selfish_detour_estimates_share(share):
    res = selfish_detour(share, 20_000, seed=11)
    assert res.estimate == pytest.approx(share, abs=0.01)
    assert res.detours == 20_000


def test_selfish_detour_zero_share():
    assert selfish_detour(0).estimate == 0
