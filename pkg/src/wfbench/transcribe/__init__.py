"""Transcription of workflow definitions into platform programs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from ..definition import UNTRANSCRIBABLE_CODES, WorkflowDefinition, validate
from .census import DELTA_REASON, DOCUMENTED_DELTAS, TransitionCount, count_transitions

PLATFORMS = ("aws", "google", "azure")


class Untranscribable(ValueError):
    """The definition uses a construct the target platform cannot express."""

    def __init__(self, platform: str, findings: Iterable[Any]):
        self.platform = platform
        self.findings = list(findings)
        detail = "; ".join(str(f) for f in self.findings)
        super().__init__(f"cannot transcribe to {platform}: {detail}")


class InvalidDefinition(ValueError):
    def __init__(self, findings: Iterable[Any]):
        self.findings = list(findings)
        super().__init__("; ".join(str(f) for f in self.findings))


@dataclass(frozen=True)
class StateCensus:
    platform: str
    state_count: int
    definition: WorkflowDefinition = field(repr=False)
    # published minus computed transitions, when a benchmark is a known outlier
    documented_delta: int = 0
    delta_reason: str = ""

    def transitions(
        self,
        fanouts: Mapping[str, int] | None = None,
        failures: Iterable[str] = (),
        choices: Mapping[str, str] | None = None,
    ) -> TransitionCount:
        return count_transitions(self.platform, self.definition, fanouts, failures, choices)

    def transitions_per_execution(
        self,
        fanouts: Mapping[str, int] | None = None,
        failures: Iterable[str] = (),
        choices: Mapping[str, str] | None = None,
    ) -> int:
        return self.transitions(fanouts, failures, choices).total


@dataclass(frozen=True)
class PlatformProgram:
    platform: str
    document: str
    census: StateCensus
    # machine-readable caveats, e.g. loop payload isolation on AWS
    notes: tuple[dict, ...] = ()
    # extra named artifacts (the Azure activity manifest, a YAML rendering)
    extras: Mapping[str, str] = field(default_factory=dict)

    def parsed(self) -> Any:
        return json.loads(self.document)


def check_transcribable(defn: WorkflowDefinition, platform: str) -> None:
    report = validate(defn)
    blocking = [f for f in report.errors if f.code in UNTRANSCRIBABLE_CODES]
    other = [f for f in report.errors if f.code not in UNTRANSCRIBABLE_CODES]
    if other:
        raise InvalidDefinition(other)
    if blocking and platform != "azure":
        raise Untranscribable(platform, blocking)


def make_census(platform: str, defn: WorkflowDefinition, state_count: int) -> StateCensus:
    delta = DOCUMENTED_DELTAS.get(defn.name, {}).get(platform, 0)
    return StateCensus(
        platform,
        state_count,
        defn,
        documented_delta=delta,
        delta_reason=DELTA_REASON.get(defn.name, "") if delta else "",
    )


from .aws import to_aws  # noqa: E402
from .azure import to_azure  # noqa: E402
from .google import to_google  # noqa: E402

TRANSCRIBERS = {"aws": to_aws, "google": to_google, "azure": to_azure}


def transcribe(defn: WorkflowDefinition, platform: str) -> PlatformProgram:
    return TRANSCRIBERS[platform](defn)


def census_compare(
    defn: WorkflowDefinition,
    fanouts: Mapping[str, int] | None = None,
    failures: Iterable[str] = (),
    choices: Mapping[str, str] | None = None,
) -> list[tuple[str, int]]:
    """Platforms ordered by per-execution transitions (fewest first)."""
    failures = tuple(failures)
    counts = []
    for platform in PLATFORMS:
        program = transcribe(defn, platform)
        counts.append((platform, program.census.transitions_per_execution(fanouts, failures, choices)))
    return sorted(counts, key=lambda pc: (pc[1], PLATFORMS.index(pc[0])))


__all__ = [
    "PLATFORMS",
    "InvalidDefinition",
    "PlatformProgram",
    "StateCensus",
    "TransitionCount",
    "Untranscribable",
    "census_compare",
    "count_transitions",
    "to_aws",
    "to_azure",
    "to_google",
    "transcribe",
]
