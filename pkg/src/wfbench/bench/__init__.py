"""Benchmark corpus: application workflows and microbenchmarks."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

from ..definition import serialize
from .apps import excamera, genome, make_corpus, mapreduce, ml, trip_booking, trip_request, video
from .micro import function_chain, parallel_sleep, selfish_detour_bench, storage_io
from .spec import BenchmarkSpec

APPLICATIONS: dict[str, Callable[[], BenchmarkSpec]] = {
    "video": video,
    "mapreduce": mapreduce,
    "trip_booking": trip_booking,
    "excamera": excamera,
    "ml": ml,
    "genome": genome,
}
MICROBENCHMARKS: dict[str, Callable[[], BenchmarkSpec]] = {
    "function_chain": function_chain,
    "parallel_sleep": parallel_sleep,
    "storage_io": storage_io,
    "selfish_detour": selfish_detour_bench,
}
REGISTRY = {**APPLICATIONS, **MICROBENCHMARKS}


def get(name: str) -> BenchmarkSpec:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; known: {sorted(REGISTRY)}") from None


def all_benchmarks() -> list[BenchmarkSpec]:
    return [factory() for factory in REGISTRY.values()]


def stub_benchmarks() -> dict[str, BenchmarkSpec]:
    return {"video": video(), "excamera": excamera(), "ml": ml(), "genome": genome()}


def export_definitions(directory: str | Path) -> list[Path]:
    """Write each benchmark's definition, plus its canonical input, as standalone documents."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for spec in all_benchmarks():
        path = out / f"{spec.name}.json"
        path.write_text(serialize(spec.definition, "json"))
        inp = out / f"{spec.name}.input.json"
        inp.write_text(json.dumps(spec.canonical_input, indent=2, sort_keys=True) + "\n")
        written += [path, inp]
    return written


def kernels_for(workflow_name: str):
    """Kernels and object seeding for a definition named like a corpus benchmark."""
    for spec in all_benchmarks():
        if spec.definition.name == workflow_name:
            return spec
    return None


__all__ = [
    "APPLICATIONS",
    "MICROBENCHMARKS",
    "BenchmarkSpec",
    "all_benchmarks",
    "excamera",
    "export_definitions",
    "function_chain",
    "genome",
    "get",
    "kernels_for",
    "make_corpus",
    "mapreduce",
    "ml",
    "parallel_sleep",
    "selfish_detour_bench",
    "stub_benchmarks",
    "storage_io",
    "trip_booking",
    "trip_request",
    "video",
]
