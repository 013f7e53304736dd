"""The six application benchmarks.

MapReduce and Trip Booking run real logic. Video, ExCamera, ML and
1000Genome use stub kernels that shape payloads like the real ones, move
scaled bytes through object storage and report modeled durations.
"""

from __future__ import annotations

import math
import string
from collections import Counter
from typing import Any

import numpy as np

from ..definition import definition_from_dict
from ..sim.engine import KernelContext, KernelError, KernelResult
from .spec import DEFAULT_BYTE_SCALE, BenchmarkSpec, jitter, share_bytes, stub

# ---------------------------------------------------------------------------
# MapReduce (word count)


def vocabulary(m: int) -> list[str]:
    letters = string.ascii_lowercase
    return [letters[i % 26] * (1 + i // 26) + "word" for i in range(m)]


def make_corpus(words: int, distinct: int, seed: int) -> list[str]:
    """Seeded word list with exactly ``distinct`` different words (when ``words >= distinct``)."""
    vocab = vocabulary(distinct)
    if words == 0:
        return []
    rng = np.random.default_rng(seed)
    out = list(vocab[: min(words, distinct)])
    out += [vocab[i] for i in rng.integers(0, distinct, size=words - len(out))]
    rng.shuffle(out)
    return out


def _split(payload: Any, ctx: KernelContext) -> KernelResult:
    w, m, n = int(payload["W"]), int(payload["M"]), int(payload["N"])
    corpus = make_corpus(w, m, int(payload.get("seed", 0)))
    bounds = np.linspace(0, len(corpus), n + 1).astype(int)
    vocab = vocabulary(m)
    chunks = [{"words": corpus[a:b], "vocab": vocab} for a, b in zip(bounds, bounds[1:])]
    return KernelResult({"chunks": chunks}, 20_000 + 2 * w)


def _map(payload: Any, ctx: KernelContext) -> KernelResult:
    counts = Counter(payload["words"])
    return KernelResult({"counts": {v: counts.get(v, 0) for v in payload["vocab"]}}, 10_000 + 5 * len(payload["words"]))


def _shuffle(payload: Any, ctx: KernelContext) -> KernelResult:
    # flatten the per-mapper arrays so reduce can fan out over words
    words = list(payload[0]["counts"]) if payload else []
    groups = [{"word": w, "counts": [p["counts"][w] for p in payload]} for w in words]
    return KernelResult({"groups": groups}, 5_000 + 100 * len(groups))


def _reduce(payload: Any, ctx: KernelContext) -> KernelResult:
    return KernelResult({"word": payload["word"], "total": sum(payload["counts"])}, 5_000)


def mapreduce(N: int = 3, W: int = 5000, M: int = 5, seed: int = 7) -> BenchmarkSpec:
    defn = definition_from_dict(
        {
            "name": "mapreduce",
            "root": "split",
            "phases": {
                "split": {"type": "task", "func": "split", "next": "map"},
                "map": {"type": "map", "func": "count", "array": "chunks", "next": "shuffle"},
                "shuffle": {"type": "task", "func": "shuffle", "next": "reduce"},
                "reduce": {"type": "map", "func": "reduce", "array": "groups"},
            },
        }
    )
    return BenchmarkSpec(
        name="mapreduce",
        definition=defn,
        params={"N": N, "W": W, "M": M, "seed": seed},
        kernels={"split": _split, "count": _map, "shuffle": _shuffle, "reduce": _reduce},
        canonical_input={"W": W, "M": M, "N": N, "seed": seed},
        canonical_fanouts={"map": N, "reduce": M},
        expected_structure=(9, 5, 4),
        reference_transitions=(14, 54),
    )


# ---------------------------------------------------------------------------
# Trip Booking (SAGA)

TRIP_ITEMS = ("hotel", "car", "flight")
TRIP_TABLE = "trips"


def _trip_key(payload: dict, ctx: KernelContext) -> str:
    # one request replayed across a burst must not collide with itself
    return f"{payload['trip_id']}@{ctx.invocation}"


def _reserve(item: str):
    def kernel(payload: Any, ctx: KernelContext) -> KernelResult:
        if not isinstance(payload, dict) or not payload.get("trip_id") or item not in payload:
            raise KernelError("empty trip request")
        ctx.kv.create(TRIP_TABLE, _trip_key(payload, ctx), {"status": "reserved", **payload[item]}, sk=item)
        return KernelResult(payload, jitter(ctx, 0.05))

    return kernel


def _confirm(payload: Any, ctx: KernelContext) -> KernelResult:
    if payload.get("fail_at_confirm"):
        raise KernelError("confirmation rejected")
    for item in TRIP_ITEMS:
        ctx.kv.modify(TRIP_TABLE, _trip_key(payload, ctx), {"status": "confirmed"}, sk=item)
    return KernelResult(payload, jitter(ctx, 0.05))


def _cancel(item: str):
    def kernel(payload: Any, ctx: KernelContext) -> KernelResult:
        ctx.kv.delete(TRIP_TABLE, _trip_key(payload, ctx), sk=item)
        return KernelResult(payload, jitter(ctx, 0.05))

    return kernel


def trip_request(trip_id: str = "trip-1", fail_at_confirm: bool = False) -> dict:
    return {
        "trip_id": trip_id,
        "hotel": {"name": "Harbour Inn", "nights": 3},
        "car": {"class": "compact", "days": 3},
        "flight": {"from": "ZRH", "to": "LIS"},
        "fail_at_confirm": fail_at_confirm,
    }


def trip_booking(fail_at_confirm: bool = True) -> BenchmarkSpec:
    """Reserve hotel, car and flight, then confirm; a failed confirm cancels in reverse order.

    The function names are invented; only ``confirm`` is named by the source.
    """
    defn = definition_from_dict(
        {
            "name": "trip_booking",
            "root": "reserve_hotel",
            "phases": {
                "reserve_hotel": {"type": "task", "func": "reserve_hotel", "next": "reserve_car"},
                "reserve_car": {"type": "task", "func": "reserve_car", "next": "reserve_flight"},
                "reserve_flight": {"type": "task", "func": "reserve_flight", "next": "confirm"},
                "confirm": {"type": "task", "func": "confirm", "on_error": "cancel_flight"},
                "cancel_flight": {"type": "task", "func": "cancel_flight", "next": "cancel_car"},
                "cancel_car": {"type": "task", "func": "cancel_car", "next": "cancel_hotel"},
                "cancel_hotel": {"type": "task", "func": "cancel_hotel"},
            },
        }
    )
    kernels = {f"reserve_{i}": _reserve(i) for i in TRIP_ITEMS}
    kernels.update({f"cancel_{i}": _cancel(i) for i in TRIP_ITEMS})
    kernels["confirm"] = _confirm
    return BenchmarkSpec(
        name="trip_booking",
        definition=defn,
        params={"fail_at_confirm": fail_at_confirm},
        kernels=kernels,
        canonical_input=trip_request(fail_at_confirm=fail_at_confirm),
        canonical_fanouts={},
        expected_structure=(7, 1, "4/7"),
        failures=("confirm",) if fail_at_confirm else (),
        reference_transitions=(9, 16),
    )


# ---------------------------------------------------------------------------
# stub applications


def _objects(bench: str, funcs: dict[str, int], download_mb: float, upload_mb: float, scale: float):
    """Per-function read/write sizes: the totals split evenly over all executions."""
    executions = sum(funcs.values())
    rd = share_bytes(download_mb, executions, scale)
    wr = share_bytes(upload_mb, executions, scale)
    return rd, wr, {f"{bench}/{f}/input": rd for f in funcs}


def video(F: int = 10, B: int = 5, scale: float = DEFAULT_BYTE_SCALE) -> BenchmarkSpec:
    n = math.ceil(F / B)
    rd, wr, objs = _objects("video", {"decode": 1, "detect": n, "acc": 1}, 238.83, 7.48, scale)
    defn = definition_from_dict(
        {
            "name": "video",
            "root": "decode",
            "phases": {
                "decode": {"type": "task", "func": "decode", "next": "detect"},
                "detect": {"type": "map", "func": "detect", "array": "batches", "next": "acc"},
                "acc": {"type": "task", "func": "acc"},
            },
        }
    )
    kernels = {
        "decode": stub("video", 1.5, rd, wr, lambda p: {"batches": list(range(math.ceil(p["F"] / p["B"])))}),
        "detect": stub("video", 2.0, rd, wr, lambda b: {"batch": b, "detections": 3}),
        "acc": stub("video", 0.3, rd, wr, lambda ys: {"detections": sum(y["detections"] for y in ys)}),
    }
    return BenchmarkSpec(
        name="video",
        definition=defn,
        params={"F": F, "B": B},
        kernels=kernels,
        canonical_input={"F": F, "B": B},
        canonical_fanouts={"detect": n},
        expected_structure=(4, 2, 3),
        reference_transitions=(7, 20),
        objects=objs,
    )


def excamera(M: int = 30, N: int = 6, scale: float = DEFAULT_BYTE_SCALE) -> BenchmarkSpec:
    """Split, encode chunks, group, re-encode, rebase chunk pairs in order, concatenate."""
    t = M // N
    pairs = math.ceil(t / 2)
    funcs = {"split": 1, "encode": t, "group": 1, "reencode": t, "rebase": pairs, "concat": 1}
    rd, wr, objs = _objects("excamera", funcs, 302.07, 17.49, scale)
    defn = definition_from_dict(
        {
            "name": "excamera",
            "root": "split",
            "phases": {
                "split": {"type": "task", "func": "split", "next": "encode"},
                "encode": {"type": "map", "func": "encode", "array": "chunks", "next": "group"},
                "group": {"type": "task", "func": "group", "next": "reencode"},
                "reencode": {
                    "type": "map",
                    "func": "reencode",
                    "array": "chunks",
                    "common_parameters": "pairs",
                    "next": "rebase",
                },
                "rebase": {"type": "loop", "func": "rebase", "array": "0.pairs", "next": "concat"},
                "concat": {"type": "task", "func": "concat"},
            },
        }
    )

    def group(encoded: list) -> dict:
        chunks = [e["chunk"] for e in encoded]
        return {"chunks": chunks, "pairs": [chunks[i : i + 2] for i in range(0, len(chunks), 2)]}

    kernels = {
        "split": stub("excamera", 0.3, rd, wr, lambda p: {"chunks": list(range(p["M"] // p["N"]))}),
        "encode": stub("excamera", 1.5, rd, wr, lambda c: {"chunk": c}),
        "group": stub("excamera", 0.2, rd, wr, group),
        "reencode": stub("excamera", 1.2, rd, wr, lambda a: {"chunk": a["item"], "pairs": a["common"]}),
        "rebase": stub("excamera", 0.6, rd, wr, lambda pair: {"rebased": pair}),
        "concat": stub("excamera", 0.3, rd, wr, lambda parts: {"chunks": len(parts)}),
    }
    return BenchmarkSpec(
        name="excamera",
        definition=defn,
        params={"M": M, "N": N},
        kernels=kernels,
        canonical_input={"M": M, "N": N},
        canonical_fanouts={"encode": t, "reencode": t, "rebase": pairs},
        expected_structure=(16, 5, 6),
        reference_transitions=(21, 73),
        objects=objs,
    )


def ml(N: int = 500, M: int = 1024, K: int = 2, scale: float = DEFAULT_BYTE_SCALE) -> BenchmarkSpec:
    rd, wr, objs = _objects("ml", {"gen": 1, "train": K}, 7.82, 3.91, scale)
    classifiers = ["svm", "random_forest", "logistic", "knn", "mlp"]
    defn = definition_from_dict(
        {
            "name": "ml",
            "root": "gen",
            "phases": {
                "gen": {"type": "task", "func": "gen", "next": "train"},
                "train": {"type": "map", "func": "train", "array": "classifiers"},
            },
        }
    )
    kernels = {
        "gen": stub("ml", 0.8, rd, wr, lambda p: {"classifiers": classifiers[: p["K"]], "samples": p["N"]}),
        "train": stub("ml", 2.5, rd, wr, lambda c: {"classifier": c, "score": 0.9}),
    }
    return BenchmarkSpec(
        name="ml",
        definition=defn,
        params={"N": N, "M": M, "K": K},
        kernels=kernels,
        canonical_input={"N": N, "M": M, "K": K},
        canonical_fanouts={"train": K},
        expected_structure=(3, 2, 2),
        reference_transitions=(6, 18),
        objects=objs,
    )


def genome(M: int = 1250, N: int = 5, P: int = 6, scale: float = DEFAULT_BYTE_SCALE) -> BenchmarkSpec:
    """Individuals fan out over input chunks, then merge, sifting, and per-population analyses."""
    funcs = {"individuals": N, "individuals_merge": 1, "sifting": 1, "mutation_overlap": P, "frequency": P}
    rd, wr, objs = _objects("genome", funcs, 273.54, 3.47, scale)
    populations = [f"pop{i}" for i in range(P)]
    defn = definition_from_dict(
        {
            "name": "genome",
            "root": "individuals",
            "phases": {
                "individuals": {
                    "type": "map",
                    "func": "individuals",
                    "array": "chunks",
                    "common_parameters": "populations",
                    "next": "individuals_merge",
                },
                "individuals_merge": {"type": "task", "func": "individuals_merge", "next": "sifting"},
                "sifting": {"type": "task", "func": "sifting", "next": "analysis"},
                "analysis": {
                    "type": "parallel",
                    "branches": [["mutation_overlap"], ["frequency"]],
                },
                "mutation_overlap": {"type": "map", "func": "mutation_overlap", "array": "populations"},
                "frequency": {"type": "map", "func": "frequency", "array": "populations"},
            },
        }
    )
    kernels = {
        "individuals": stub("genome", 1.2, rd, wr, lambda a: {"chunk": a["item"], "populations": a["common"]}),
        "individuals_merge": stub("genome", 0.4, rd, wr, lambda xs: {"populations": xs[0]["populations"]}),
        "sifting": stub("genome", 0.8, rd, wr, lambda p: p),
        "mutation_overlap": stub("genome", 0.9, rd, wr, lambda pop: {"population": pop}),
        "frequency": stub("genome", 0.7, rd, wr, lambda pop: {"population": pop}),
    }
    lines = np.linspace(0, M, N + 1).astype(int)
    return BenchmarkSpec(
        name="genome",
        definition=defn,
        params={"M": M, "N": N, "P": P},
        kernels=kernels,
        canonical_input={
            "chunks": [[int(a), int(b)] for a, b in zip(lines, lines[1:])],
            "populations": populations,
        },
        canonical_fanouts={"individuals": N, "mutation_overlap": P, "frequency": P},
        expected_structure=(19, 12, 4),
        reference_transitions=(26, 96),
        objects=objs,
    )
