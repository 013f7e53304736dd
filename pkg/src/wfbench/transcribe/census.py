"""Per-execution state-transition counting for each platform.

Counts follow one execution path through the definition (switch outcomes
and task failures fixed by the caller) at concrete map/loop widths.

AWS charges one transition per state entry plus the start and end
transitions. Google charges one per executed step, including the steps the
transcriber generates around calls (result assignment, array zipping,
sub-workflow plumbing); ``except`` jumps are not steps. Azure is billed by
orchestrator time, so its count is the number of orchestrator awakenings:
one at start, one per phase boundary and one at the end.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from ..definition import Phase, WorkflowDefinition, execution_path


@dataclass(frozen=True)
class TransitionCount:
    internal: int
    external: int

    @property
    def total(self) -> int:
        return self.internal + self.external

    def __add__(self, other: "TransitionCount") -> "TransitionCount":
        return TransitionCount(self.internal + other.internal, self.external + other.external)


ZERO = TransitionCount(0, 0)
# start + end (AWS); input assignment + final return (Google)
FIXED = TransitionCount(2, 0)


def _width(p: Phase, fanouts: Mapping[str, int]) -> int:
    if p.kind == "repeat":
        return p.count or 0
    if p.name not in fanouts:
        raise KeyError(f"no fan-out given for {p.kind} phase {p.name!r}")
    return int(fanouts[p.name])


def aws_phase(defn: WorkflowDefinition, p: Phase, fanouts: Mapping[str, int]) -> TransitionCount:
    k = p.chain_length
    if p.kind == "task":
        return TransitionCount(0, 1)
    if p.kind in ("map", "loop"):
        return TransitionCount(1, _width(p, fanouts) * k)
    if p.kind == "repeat":
        return TransitionCount(0, _width(p, fanouts))
    if p.kind == "switch":
        return TransitionCount(1, 0)
    if p.kind == "parallel":
        out = TransitionCount(1, 0)
        for branch in p.branches:
            for m in branch:
                out = out + aws_phase(defn, defn.phases[m], fanouts)
        return out
    raise ValueError(p.kind)


def google_phase(defn: WorkflowDefinition, p: Phase, fanouts: Mapping[str, int]) -> TransitionCount:
    k = p.chain_length
    if p.kind == "task":
        # http call + result assignment
        return TransitionCount(1, 1)
    if p.kind == "map":
        n = _width(p, fanouts)
        # zip, results init, parallel-for, collect; per element: sub-workflow
        # call, return, append, and call + assign per chained function
        return TransitionCount(4 + n * (3 + k), n * k)
    if p.kind == "loop":
        n = _width(p, fanouts)
        return TransitionCount(1 + n * k, n * k)
    if p.kind == "repeat":
        n = _width(p, fanouts)
        return TransitionCount(n, n)
    if p.kind == "switch":
        return TransitionCount(1, 0)
    if p.kind == "parallel":
        out = TransitionCount(1, 0)
        for branch in p.branches:
            for m in branch:
                out = out + google_phase(defn, defn.phases[m], fanouts)
        return out
    raise ValueError(p.kind)


def count_transitions(
    platform: str,
    defn: WorkflowDefinition,
    fanouts: Mapping[str, int] | None = None,
    failures: Iterable[str] = (),
    choices: Mapping[str, str] | None = None,
) -> TransitionCount:
    fanouts = fanouts or {}
    path = [defn.phases[n] for n in execution_path(defn, failures, choices)]
    if platform == "azure":
        work = [p for p in path if p.kind != "switch"]
        return TransitionCount(len(work) + 1, 0)
    rule = {"aws": aws_phase, "google": google_phase}[platform]
    total = FIXED
    for p in path:
        total = total + rule(defn, p, fanouts)
    return total


# Benchmarks whose published counts no uniform rule reproduces. Keyed by
# definition name; value is (published - computed) per platform.
DOCUMENTED_DELTAS: dict[str, dict[str, int]] = {
    "genome": {"aws": 1, "google": -8},
}

DELTA_REASON = {
    "genome": (
        "the published AWS and Google counts cannot both be met by any structure "
        "that also has 19 functions, parallelism 12 and critical path 4 under the "
        "uniform counting rule"
    ),
}
