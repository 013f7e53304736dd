"""Microbenchmarks isolating one overhead source each."""

from __future__ import annotations

from typing import Any

from ..definition import definition_from_dict
from ..metrics import selfish_detour
from ..sim.engine import KernelContext, KernelResult
from .spec import US_PER_S, BenchmarkSpec


def function_chain(length: int = 10, payload_bytes: int = 1024) -> BenchmarkSpec:
    """``length`` consecutive functions, each returning ``payload_bytes`` to the next."""

    def link(payload: Any, ctx: KernelContext) -> KernelResult:
        step = payload.get("step", 0) + 1 if isinstance(payload, dict) else 1
        return KernelResult({"step": step, "size": payload_bytes}, 1_000, output_bytes=payload_bytes)

    defn = definition_from_dict(
        {
            "name": "function_chain",
            "root": "chain",
            "phases": {"chain": {"type": "repeat", "func": "link", "count": length}},
        }
    )
    return BenchmarkSpec(
        name="function_chain",
        definition=defn,
        params={"length": length, "M": payload_bytes},
        kernels={"link": link},
        canonical_input={"step": 0},
        canonical_fanouts={},
        expected_structure=(length, 1, 1),
    )


def parallel_sleep(N: int = 10, T: float = 1.0) -> BenchmarkSpec:
    """``N`` functions in parallel, each sleeping ``T`` seconds."""

    def sleep(payload: Any, ctx: KernelContext) -> KernelResult:
        # sleeping is not computing: report wall time as if never descheduled
        wall = int(round(float(payload) * US_PER_S))
        return KernelResult({"slept": payload}, round(wall * (1 - ctx.suspension_share)))

    defn = definition_from_dict(
        {
            "name": "parallel_sleep",
            "root": "sleep",
            "phases": {"sleep": {"type": "map", "func": "sleep", "array": "sleeps"}},
        }
    )
    return BenchmarkSpec(
        name="parallel_sleep",
        definition=defn,
        params={"N": N, "T": T},
        kernels={"sleep": sleep},
        canonical_input={"sleeps": [T] * N},
        canonical_fanouts={"sleep": N},
        expected_structure=(N, N, 1),
    )


def storage_io(parallel: int = 20, D: int = 1_000_000) -> BenchmarkSpec:
    """``parallel`` functions each downloading an object of ``D`` bytes."""

    def download(key: Any, ctx: KernelContext) -> KernelResult:
        obj = ctx.objects.get(str(key))
        return KernelResult({"key": key, "bytes": obj.size}, 1_000)

    defn = definition_from_dict(
        {
            "name": "storage_io",
            "root": "download",
            "phases": {"download": {"type": "map", "func": "download", "array": "files"}},
        }
    )
    keys = [f"storage_io/file{i}" for i in range(parallel)]
    return BenchmarkSpec(
        name="storage_io",
        definition=defn,
        params={"parallel": parallel, "D": D},
        kernels={"download": download},
        canonical_input={"files": keys},
        canonical_fanouts={"download": parallel},
        expected_structure=(parallel, parallel, 1),
        objects={k: D for k in keys},
    )


def selfish_detour_bench(N: int = 5000) -> BenchmarkSpec:
    """One function running the selfish-detour loop until it has seen ``N`` detours."""

    def detour(payload: Any, ctx: KernelContext) -> KernelResult:
        res = selfish_detour(ctx.suspension_share, N, ctx.rng)
        # the loop's elapsed time already contains the stolen time
        compute = round(res.elapsed_us * (1 - ctx.suspension_share))
        return KernelResult({"estimate": res.estimate, "detours": res.detours}, compute)

    defn = definition_from_dict(
        {
            "name": "selfish_detour",
            "root": "detour",
            "phases": {"detour": {"type": "task", "func": "detour"}},
        }
    )
    return BenchmarkSpec(
        name="selfish_detour",
        definition=defn,
        params={"N": N},
        kernels={"detour": detour},
        canonical_input={},
        canonical_fanouts={},
        expected_structure=(1, 1, 1),
    )
