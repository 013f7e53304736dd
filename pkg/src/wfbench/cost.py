"""Cost estimation from traces and state-transition censuses.

Money is kept as exact fractions of a dollar while computing and stored as
integer nano-USD per component, so the parts always sum to the total.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .definition import WorkflowDefinition
from .sim.trace import ExecutionTrace
from .transcribe import StateCensus
from .transcribe.census import TransitionCount

NANO = 10**9
US_PER_S = 10**6


class PlatformMismatch(ValueError):
    pass


class MissingRates(KeyError):
    pass


def _frac(x: Any) -> Fraction:
    return Fraction(str(x)) if isinstance(x, (float, str)) else Fraction(x)


def to_nano(usd: Fraction) -> int:
    return round(usd * NANO)


def render_usd(nano: int, places: int = 4) -> str:
    q = Fraction(nano, NANO)
    scaled = round(q * 10**places)
    sign = "-" if scaled < 0 else ""
    whole, frac = divmod(abs(scaled), 10**places)
    return f"{sign}{whole}.{frac:0{places}d}"


def load_pricing(path: str | Path | None = None) -> dict:
    if path is None:
        text = resources.files("wfbench").joinpath("pricing.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


DEFAULT_PRICING = load_pricing()


@dataclass(frozen=True)
class CostBreakdown:
    compute_nano: int
    invocation_nano: int
    orchestration_nano: int
    executions: int

    @property
    def total_nano(self) -> int:
        return self.compute_nano + self.invocation_nano + self.orchestration_nano

    @property
    def compute_usd(self) -> Fraction:
        return Fraction(self.compute_nano, NANO)

    @property
    def invocation_usd(self) -> Fraction:
        return Fraction(self.invocation_nano, NANO)

    @property
    def orchestration_usd(self) -> Fraction:
        return Fraction(self.orchestration_nano, NANO)

    @property
    def total_usd(self) -> Fraction:
        return Fraction(self.total_nano, NANO)

    def per_executions(self, k: int = 1000) -> "CostBreakdown":
        """Breakdown rescaled to ``k`` executions."""
        if not self.executions:
            return CostBreakdown(0, 0, 0, k)
        f = Fraction(k, self.executions)
        return CostBreakdown(
            round(self.compute_nano * f),
            round(self.invocation_nano * f),
            round(self.orchestration_nano * f),
            k,
        )

    def to_dict(self) -> dict:
        return {
            "executions": self.executions,
            "compute_usd": render_usd(self.compute_nano),
            "invocation_usd": render_usd(self.invocation_nano),
            "orchestration_usd": render_usd(self.orchestration_nano),
            "total_usd": render_usd(self.total_nano),
            "total_nano_usd": self.total_nano,
        }


def price(
    platform: str,
    executions: int,
    gb_seconds: Fraction | float | str,
    invocations: int,
    transitions: TransitionCount | int = 0,
    orchestrator_gb_seconds: Fraction | float | str = 0,
    pricing: Mapping | None = None,
) -> CostBreakdown:
    """Price ``executions`` workflow runs from their aggregate usage.

    ``gb_seconds``, ``invocations`` and ``transitions`` are per execution.
    On Azure, ``transitions`` counts orchestrator replays and
    ``orchestrator_gb_seconds`` the orchestrator's memory-duration integral.
    """
    rates = (pricing or DEFAULT_PRICING)[platform]
    if isinstance(transitions, int):
        transitions = TransitionCount(transitions, 0)
    n = Fraction(executions)
    compute = n * _frac(gb_seconds) * _frac(rates["compute_per_gb_s"])
    invocation = n * invocations * _frac(rates["invocations_per_million"]) / 10**6
    if platform == "aws":
        orch = n * transitions.total * _frac(rates["transitions_per_1000"]) / 1000
    elif platform == "google":
        orch = n * (
            transitions.internal * _frac(rates["internal_per_1000"])
            + transitions.external * _frac(rates["external_per_1000"])
        ) / 1000
    elif platform == "azure":
        orch = n * (
            _frac(orchestrator_gb_seconds) * _frac(rates["compute_per_gb_s"])
            + transitions.total * _frac(rates["orchestration_per_1000"]) / 1000
        )
    else:
        raise ValueError(f"unknown platform {platform!r}")
    return CostBreakdown(to_nano(compute), to_nano(invocation), to_nano(orch), executions)


_SHAPE = {"aws": "aws", "google": "google", "azure": "azure"}


def _census_transitions(census: Any, trace: ExecutionTrace) -> TransitionCount:
    if census is None:
        return trace.transitions
    if isinstance(census, TransitionCount):
        return census
    if isinstance(census, int):
        return TransitionCount(census, 0)
    if isinstance(census, StateCensus):
        failures, choices = decisions_to_path(census.definition, trace.decisions)
        return census.transitions(trace.fanouts, failures, choices)
    raise TypeError(f"unsupported census {census!r}")


def decisions_to_path(defn: WorkflowDefinition, decisions: Iterable[str]) -> tuple[list[str], dict[str, str]]:
    """Recover failed phases and switch choices from recorded routing decisions."""
    failures, choices = [], {}
    for d in decisions:
        _, phase, outcome = d.split(":", 2)
        if outcome == "err":
            failures.append(phase)
        elif outcome == "default":
            choices[phase] = defn.phases[phase].default
        elif outcome.isdigit():
            choices[phase] = defn.phases[phase].cases[int(outcome)].next
    return failures, choices


def estimate(
    traces: Sequence[ExecutionTrace],
    census: StateCensus | TransitionCount | int | None = None,
    memory_gb: float | str | None = None,
    pricing: Mapping | None = None,
    platform: str = "aws",
) -> CostBreakdown:
    """Cost of the executions in ``traces`` on ``platform``.

    Without ``census``, the transitions each trace recorded are used.
    """
    pricing = pricing or DEFAULT_PRICING
    for t in traces:
        if t.shape != _SHAPE.get(platform):
            raise PlatformMismatch(f"trace {t.invocation} has shape {t.shape!r}, not {platform!r}")
    total = CostBreakdown(0, 0, 0, 0)
    for t in traces:
        mem = _frac(memory_gb) if memory_gb is not None else Fraction(t.memory_mb, 1024)
        if mem <= 0:
            raise ValueError("memory_gb must be positive")
        busy_us = sum(e.duration for e in t.events)
        gb_s = Fraction(busy_us, US_PER_S) * mem
        orch_gb_s = Fraction(0)
        if platform == "azure":
            orch_gb_s = Fraction(t.orchestrator_time, US_PER_S) * _frac(pricing["azure"]["orchestrator_memory_gb"])
        one = price(
            platform,
            1,
            gb_s,
            len(t.events),
            _census_transitions(census, t),
            orch_gb_s,
            pricing,
        )
        total = CostBreakdown(
            total.compute_nano + one.compute_nano,
            total.invocation_nano + one.invocation_nano,
            total.orchestration_nano + one.orchestration_nano,
            total.executions + 1,
        )
    return total


def compute_rate_ratio(a: str = "aws", b: str = "google", pricing: Mapping | None = None) -> Fraction:
    pricing = pricing or DEFAULT_PRICING
    return _frac(pricing[a]["compute_per_gb_s"]) / _frac(pricing[b]["compute_per_gb_s"])


# ---------------------------------------------------------------------------
# key-value store operations


def nosql_cost(ops: Iterable[Mapping[str, Any]], platform: str, rates: Mapping | None) -> Fraction:
    """USD for key-value operations under the platform's billing rule.

    ``rates[platform]`` selects the rule with ``model``:

    * ``size_increment`` -- each op costs per started size unit (separate
      read and write unit sizes and prices per million units)
    * ``request_units`` -- request units per started KiB, priced per million
    * ``flat`` -- a fixed price per operation, optionally per kind
    """
    if not rates or platform not in rates:
        raise MissingRates(f"no key-value rates configured for {platform!r}")
    r = rates[platform]
    total = Fraction(0)
    for op in ops:
        kind, size = op["op"], int(op.get("size_bytes", 0))
        reading = kind == "read"
        if r["model"] == "size_increment":
            unit = int(r["read_unit_bytes"] if reading else r["write_unit_bytes"])
            units = max(1, -(-size // unit))
            rate = _frac(r["read_per_million"] if reading else r["write_per_million"])
            total += units * rate / 10**6
        elif r["model"] == "request_units":
            kib = max(1, -(-size // 1024))
            ru = kib * _frac(r["ru_per_read_kib"] if reading else r["ru_per_write_kib"])
            total += ru * _frac(r["per_million_ru"]) / 10**6
        elif r["model"] == "flat":
            total += _frac(r.get(f"{kind}_per_op", r["per_op"]))
        else:
            raise ValueError(f"unknown key-value billing model {r['model']!r}")
    return total
