"""Execution traces and their line-delimited JSON encoding.

Times are integer microseconds of virtual time. Each trace is written as
its function records, then its coordinator records, then one
``invocation`` summary record. Field order is fixed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Iterable, Iterator

from ..transcribe.census import TransitionCount


@dataclass(frozen=True)
class FunctionEvent:
    invocation: str
    node: str
    function: str
    phase: str
    # alternating (stage, branch) indices locating the event in the phase structure
    path: tuple[int, ...]
    acquired: int
    start: int
    end: int
    container: str
    cold: bool
    payload_in: int
    payload_out: int
    failed: bool = False
    bytes_read: int = 0
    bytes_written: int = 0

    @property
    def duration(self) -> int:
        return self.end - self.start

    def to_record(self) -> dict:
        return {
            "record": "function",
            "invocation": self.invocation,
            "node": self.node,
            "function": self.function,
            "phase": self.phase,
            "path": list(self.path),
            "acquired": self.acquired,
            "start": self.start,
            "end": self.end,
            "container": self.container,
            "cold": self.cold,
            "payload_in": self.payload_in,
            "payload_out": self.payload_out,
            "failed": self.failed,
            "bytes_read": self.bytes_read,
            "bytes_written": self.bytes_written,
        }


@dataclass(frozen=True)
class CoordinatorEvent:
    invocation: str
    node: str
    start: int
    end: int
    internal: int = 0
    external: int = 0

    @property
    def duration(self) -> int:
        return self.end - self.start

    def to_record(self) -> dict:
        return {
            "record": "coordinator",
            "invocation": self.invocation,
            "node": self.node,
            "start": self.start,
            "end": self.end,
            "internal": self.internal,
            "external": self.external,
        }


@dataclass
class ExecutionTrace:
    invocation: str
    workflow: str
    model: str
    shape: str
    submitted: int
    events: list[FunctionEvent] = field(default_factory=list)
    coordinators: list[CoordinatorEvent] = field(default_factory=list)
    status: str = "succeeded"
    error: str | None = None
    fanouts: dict[str, int] = field(default_factory=dict)
    decisions: list[str] = field(default_factory=list)
    kv_ops: list[dict] = field(default_factory=list)
    memory_mb: int = 1024
    output: Any = None

    @property
    def transitions(self) -> TransitionCount:
        return TransitionCount(
            sum(c.internal for c in self.coordinators),
            sum(c.external for c in self.coordinators),
        )

    @property
    def start(self) -> int:
        times = [e.start for e in self.events] + [c.start for c in self.coordinators]
        return min(times, default=self.submitted)

    @property
    def end(self) -> int:
        times = [e.end for e in self.events] + [c.end for c in self.coordinators]
        return max(times, default=self.submitted)

    @property
    def total_runtime(self) -> int:
        return self.end - self.start

    @property
    def orchestrator_time(self) -> int:
        return sum(c.duration for c in self.coordinators)

    def function_order(self) -> list[str]:
        """Function nodes in execution order (start time, then node id)."""
        return [e.node for e in sorted(self.events, key=lambda e: (e.start, e.node))]

    def summary_record(self) -> dict:
        t = self.transitions
        return {
            "record": "invocation",
            "invocation": self.invocation,
            "workflow": self.workflow,
            "model": self.model,
            "shape": self.shape,
            "memory_mb": self.memory_mb,
            "status": self.status,
            "error": self.error,
            "submitted": self.submitted,
            "total_runtime": self.total_runtime,
            "transitions": {"internal": t.internal, "external": t.external},
            "fanouts": dict(self.fanouts),
            "decisions": list(self.decisions),
            "kv_ops": list(self.kv_ops),
            "output": self.output,
        }

    def records(self) -> Iterator[dict]:
        for e in self.events:
            yield e.to_record()
        for c in self.coordinators:
            yield c.to_record()
        yield self.summary_record()


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"))


def write_traces(out: IO[str] | str | Path, traces: Iterable[ExecutionTrace]) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8") as fh:
            write_traces(fh, traces)
        return
    for trace in traces:
        for rec in trace.records():
            out.write(dumps_record(rec) + "\n")


class TraceFormatError(ValueError):
    pass


def read_traces(source: IO[str] | str | Path) -> list[ExecutionTrace]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return read_traces(fh)
    pending_f: dict[str, list[FunctionEvent]] = {}
    pending_c: dict[str, list[CoordinatorEvent]] = {}
    traces = []
    for lineno, line in enumerate(source, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            kind = rec.pop("record")
        except (json.JSONDecodeError, KeyError, AttributeError) as exc:
            raise TraceFormatError(f"line {lineno}: not a trace record") from exc
        if kind == "function":
            rec["path"] = tuple(rec["path"])
            pending_f.setdefault(rec["invocation"], []).append(FunctionEvent(**rec))
        elif kind == "coordinator":
            pending_c.setdefault(rec["invocation"], []).append(CoordinatorEvent(**rec))
        elif kind == "invocation":
            inv = rec["invocation"]
            traces.append(
                ExecutionTrace(
                    invocation=inv,
                    workflow=rec["workflow"],
                    model=rec["model"],
                    shape=rec["shape"],
                    submitted=rec["submitted"],
                    events=pending_f.pop(inv, []),
                    coordinators=pending_c.pop(inv, []),
                    status=rec["status"],
                    error=rec["error"],
                    fanouts=rec["fanouts"],
                    decisions=rec["decisions"],
                    kv_ops=rec["kv_ops"],
                    memory_mb=rec["memory_mb"],
                    output=rec.get("output"),
                )
            )
        else:
            raise TraceFormatError(f"line {lineno}: unknown record type {kind!r}")
    if pending_f or pending_c:
        raise TraceFormatError("records without an invocation summary")
    return traces
