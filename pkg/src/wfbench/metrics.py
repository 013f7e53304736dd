"""Trace analytics: critical path, overhead, scaling, cold starts, noise, median CIs."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .sim.trace import ExecutionTrace, FunctionEvent


class EmptyTrace(ValueError):
    pass


class DomainError(ValueError):
    pass


class TooFewSamples(ValueError):
    pass


@dataclass(frozen=True)
class PhaseRuntime:
    phase: str
    start: int
    end: int

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Decomposition:
    T_C: int
    T_O: int
    total: int

    @property
    def relative_overhead(self) -> float:
        return self.T_O / self.T_C if self.T_C else math.inf


def phase_runtimes(trace: ExecutionTrace) -> list[PhaseRuntime]:
    """Per phase: earliest function start to latest function end."""
    spans: dict[str, list[int]] = {}
    for e in trace.events:
        s = spans.setdefault(e.phase, [e.start, e.end])
        s[0] = min(s[0], e.start)
        s[1] = max(s[1], e.end)
    out = [PhaseRuntime(p, s, t) for p, (s, t) in spans.items()]
    return sorted(out, key=lambda r: (r.start, r.phase))


def _tc(events: list[FunctionEvent], depth: int) -> int:
    # A path alternates stage and branch indices: stages add up, branches
    # of one stage run side by side so only the longest counts.
    stages: dict[int, dict[int, list[FunctionEvent]]] = defaultdict(lambda: defaultdict(list))
    total = 0
    for e in events:
        if len(e.path) <= depth:
            total += e.duration
            continue
        stages[e.path[depth]][e.path[depth + 1]].append(e)
    for branches in stages.values():
        total += max(_tc(evs, depth + 2) for evs in branches.values())
    return total


def critical_path(trace: ExecutionTrace) -> Decomposition:
    """Sum of per-phase maximum function durations, and the rest of the runtime.

    Inside a phase, the critical path of a map element running a function
    chain is the chain's summed duration; parallel branches contribute the
    longest branch, where each branch is itself a sequence of phases.
    """
    if not trace.events:
        raise EmptyTrace(f"trace {trace.invocation} has no function events")
    tc = _tc(list(trace.events), 0)
    total = trace.total_runtime
    return Decomposition(tc, total - tc, total)


def normalize_critical_path(t_c: int, s_m: float | Fraction | Decimal | str) -> int:
    """T_C scaled by the share of time the function actually ran, half-even to microseconds."""
    share = Fraction(s_m)  # exact value of the float, decimal string or rational
    if not 0 <= share < 1:
        raise DomainError(f"suspension share {s_m} outside [0, 1)")
    return round(Fraction(t_c) * (1 - share))  # Fraction rounds half to even


# ---------------------------------------------------------------------------
# scaling and cold starts


@dataclass(frozen=True)
class ScalingProfile:
    points: tuple[tuple[int, int], ...]  # (time, active containers) at each change

    @property
    def max(self) -> int:
        return max((n for _, n in self.points), default=0)

    def area(self) -> int:
        """Container-microseconds under the step function."""
        total = 0
        for (t0, n), (t1, _) in zip(self.points, self.points[1:]):
            total += n * (t1 - t0)
        return total

    def local_maxima(self) -> list[int]:
        values = [n for _, n in self.points]
        out = []
        for i, v in enumerate(values):
            left = values[i - 1] if i else -1
            right = values[i + 1] if i + 1 < len(values) else -1
            if v > left and v >= right and v > 0:
                out.append(v)
        return out


def scaling_profile(traces: Iterable[ExecutionTrace]) -> ScalingProfile:
    """Distinct containers holding an in-flight execution over time.

    A container is busy from the moment it is granted (cold or warm start
    included) until its function ends.
    """
    deltas: dict[int, int] = defaultdict(int)
    busy: dict[str, list[tuple[int, int]]] = defaultdict(list)
    for t in traces:
        for e in t.events:
            busy[e.container].append((e.acquired, e.end))
    for intervals in busy.values():
        for a, b in intervals:
            if b > a:
                deltas[a] += 1
                deltas[b] -= 1
    points = []
    level = 0
    for t in sorted(deltas):
        if deltas[t] == 0:
            continue
        level += deltas[t]
        points.append((t, level))
    return ScalingProfile(tuple(points))


def cold_fraction(traces: Iterable[ExecutionTrace]) -> float:
    events = [e for t in traces for e in t.events]
    if not events:
        raise EmptyTrace("no function events")
    return sum(e.cold for e in events) / len(events)


def cold_start_stats(traces: Iterable[ExecutionTrace]) -> dict[str, float]:
    """Cold fraction per platform model."""
    by_model: dict[str, list[ExecutionTrace]] = defaultdict(list)
    for t in traces:
        by_model[t.model].append(t)
    if not by_model:
        raise EmptyTrace("no traces")
    return {m: cold_fraction(ts) for m, ts in sorted(by_model.items())}


# ---------------------------------------------------------------------------
# median confidence interval


@dataclass(frozen=True)
class MedianCI:
    low: float
    high: float
    coverage: float
    ranks: tuple[int, int]  # 1-based order statistics

    def __iter__(self):
        return iter((self.low, self.high, self.coverage))


def median_ci_ranks(n: int, confidence: float = 0.95) -> tuple[int, int, Fraction]:
    """Narrowest symmetric order-statistic ranks whose binomial(n, 1/2) coverage reaches ``confidence``."""
    if n < 6:
        raise TooFewSamples(f"need at least 6 samples, got {n}")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    target = Fraction(Decimal(str(confidence)))
    denom = 2**n
    best = None
    for low in range(1, n // 2 + 1):
        high = n + 1 - low
        mass = Fraction(sum(math.comb(n, i) for i in range(low, high)), denom)
        if mass >= target:
            best = (low, high, mass)
        else:
            break
    if best is None:
        raise TooFewSamples(f"{n} samples cannot reach {confidence} coverage")
    return best


def median_ci(samples: Sequence[float], confidence: float = 0.95) -> MedianCI:
    values = np.sort(np.asarray(samples, dtype=float))
    low, high, mass = median_ci_ranks(len(values), confidence)
    return MedianCI(float(values[low - 1]), float(values[high - 1]), float(mass), (low, high))


# ---------------------------------------------------------------------------
# OS noise


@dataclass(frozen=True)
class DetourResult:
    estimate: float
    elapsed_us: float
    detours: int


def selfish_detour(
    suspension_share: float,
    n_events: int = 5000,
    seed: int | np.random.Generator = 0,
    quantum_us: float = 100.0,
    threshold_cycles: int = 10_000,
    clock_ghz: float = 2.0,
) -> DetourResult:
    """Simulated selfish-detour loop on a host that steals ``suspension_share`` of the time.

    The host deschedules the loop for ``quantum_us`` after exponentially
    distributed run periods with mean ``quantum_us * (1 - S) / S``. The loop
    records an event whenever one iteration overruns ``threshold_cycles``;
    after ``n_events`` events the estimate is the summed overrun divided by
    the elapsed time.
    """
    if not 0 <= suspension_share < 1:
        raise DomainError(f"suspension share {suspension_share} outside [0, 1)")
    if suspension_share == 0:
        return DetourResult(0.0, 0.0, 0)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mean_run = quantum_us * (1 - suspension_share) / suspension_share
    runs = rng.exponential(mean_run, n_events)
    # suspensions jitter a little around the quantum, as host ticks do
    stolen = quantum_us * rng.uniform(0.9, 1.1, n_events)
    threshold_us = threshold_cycles / (clock_ghz * 1e3)
    recorded = stolen[stolen > threshold_us]
    elapsed = float(runs.sum() + stolen.sum())
    return DetourResult(float(recorded.sum() / elapsed), elapsed, int(recorded.size))
