from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from ..definition import Structure, WorkflowDefinition, structure
from ..sim.engine import Kernel, KernelContext, KernelResult
from ..sim.stores import ObjectStore

US_PER_S = 1_000_000
# Stub payloads are the published download/upload sizes times this factor.
DEFAULT_BYTE_SCALE = 1 / 1000


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    definition: WorkflowDefinition
    params: Mapping[str, Any]
    kernels: Mapping[str, Kernel]
    canonical_input: Any
    canonical_fanouts: Mapping[str, int]
    expected_structure: tuple[int, int, Any]
    # task phases that fail on the canonical path (drives census and structure)
    failures: tuple[str, ...] = ()
    # published (AWS, Google) per-execution transitions, applications only
    reference_transitions: tuple[int, int] | None = None
    objects: Mapping[str, int] = field(default_factory=dict)
    untranscribable: str | None = None

    def prepare(self, store: ObjectStore) -> None:
        """Seed the object store with the inputs the kernels download."""
        for key, size in self.objects.items():
            if key not in store:
                store.put(key, size)

    def structure(self, failures: tuple[str, ...] | None = None) -> Structure:
        f = self.failures if failures is None else failures
        return structure(self.definition, self.canonical_fanouts, f)

    @property
    def triple(self) -> tuple[int, int, int]:
        s = self.structure()
        return (s.function_count, s.parallelism, s.phases)


def jitter(ctx: KernelContext, seconds: float, sigma: float = 0.05) -> int:
    """Modeled duration with multiplicative lognormal noise, in microseconds."""
    return int(round(seconds * US_PER_S * math.exp(sigma * ctx.rng.standard_normal())))


def stub(
    bench: str,
    seconds: float,
    read_bytes: int,
    write_bytes: int,
    body: Callable[[Any], Any],
) -> Kernel:
    """A kernel that downloads its input object, uploads a result and reports a modeled duration."""

    def kernel(payload: Any, ctx: KernelContext) -> KernelResult:
        if read_bytes:
            ctx.objects.get(f"{bench}/{ctx.function}/input")
        if write_bytes:
            ctx.objects.put(f"{bench}/{ctx.function}/{ctx.invocation}/{ctx.node}", write_bytes)
        return KernelResult(body(payload), jitter(ctx, seconds))

    kernel.__name__ = f"stub_{bench}"
    return kernel


def share_bytes(total_mb: float, executions: int, scale: float) -> int:
    return int(round(total_mb * 1e6 * scale / executions)) if executions else 0
