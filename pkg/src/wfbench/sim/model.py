"""Platform models: the calibration knobs of the simulated platform."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

SHAPES = ("generic", "aws", "google", "azure")
US_PER_MS = 1000


def ms(value: float) -> int:
    """Milliseconds to integer microseconds."""
    return int(round(value * US_PER_MS))


@dataclass(frozen=True)
class Latency:
    """Cold-start latency distribution, in milliseconds."""

    kind: str = "fixed"  # fixed | uniform | lognormal
    value: float = 0.0  # fixed value, or median for lognormal
    low: float = 0.0
    high: float = 0.0
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "uniform", "lognormal"):
            raise ValueError(f"unknown latency distribution {self.kind!r}")
        if min(self.value, self.low, self.high, self.sigma) < 0 or self.high < self.low:
            raise ValueError("latency parameters must be non-negative with low <= high")

    def sample_us(self, rng: np.random.Generator) -> int:
        if self.kind == "fixed":
            return ms(self.value)
        if self.kind == "uniform":
            return ms(rng.uniform(self.low, self.high))
        return ms(self.value * math.exp(self.sigma * rng.standard_normal()))

    @classmethod
    def parse(cls, raw: Any) -> "Latency":
        if isinstance(raw, (int, float)):
            return cls("fixed", float(raw))
        return cls(**raw)


@dataclass(frozen=True)
class PlatformModel:
    name: str
    shape: str = "generic"
    # positive int, "unlimited", or "burst" (burst size times the workflow's peak fan-out)
    container_cap: int | str = "unlimited"
    cold_start: Latency = field(default_factory=Latency)
    warm_start_ms: float = 0.0
    per_transition_overhead_ms: float = 0.0
    storage_latency_ms: float = 0.0
    storage_bandwidth_mb_s: float = math.inf
    payload_channel_threshold_bytes: int | None = None
    # suspension share per memory size in MB; "default" applies otherwise
    suspension_share: Mapping[str, float] = field(default_factory=lambda: {"default": 0.0})
    max_parallelism: int | None = None
    memory_mb: int = 1024
    description: str = ""

    def __post_init__(self) -> None:
        if self.shape not in SHAPES:
            raise ValueError(f"unknown platform shape {self.shape!r}")
        cap = self.container_cap
        if isinstance(cap, str):
            if cap not in ("unlimited", "burst"):
                raise ValueError(f"container_cap must be a positive integer, 'unlimited' or 'burst', got {cap!r}")
        elif cap < 1:
            raise ValueError("container_cap must be >= 1")
        for v in (self.warm_start_ms, self.per_transition_overhead_ms, self.storage_latency_ms):
            if v < 0:
                raise ValueError("durations must be non-negative")
        if self.storage_bandwidth_mb_s <= 0:
            raise ValueError("storage bandwidth must be positive")
        for s in self.suspension_share.values():
            if not 0 <= s < 1:
                raise ValueError(f"suspension share {s} outside [0, 1)")
        if self.max_parallelism is not None and self.max_parallelism < 1:
            raise ValueError("max_parallelism must be >= 1")

    @property
    def overhead_us(self) -> int:
        return ms(self.per_transition_overhead_ms)

    @property
    def warm_us(self) -> int:
        return ms(self.warm_start_ms)

    def storage_us(self, nbytes: int) -> int:
        """Affine storage latency: fixed latency plus transfer time."""
        transfer_s = nbytes / (self.storage_bandwidth_mb_s * 1e6) if math.isfinite(self.storage_bandwidth_mb_s) else 0.0
        return ms(self.storage_latency_ms) + int(round(transfer_s * 1e6))

    def share(self, memory_mb: int | None = None) -> float:
        key = str(memory_mb if memory_mb is not None else self.memory_mb)
        return float(self.suspension_share.get(key, self.suspension_share.get("default", 0.0)))

    def cap_for(self, burst_size: int, peak_fanout: int) -> int | None:
        if self.container_cap == "unlimited":
            return None
        if self.container_cap == "burst":
            return max(1, burst_size * max(1, peak_fanout))
        return int(self.container_cap)

    def with_(self, **changes: Any) -> "PlatformModel":
        data = self.to_dict()
        data.update(changes)
        return PlatformModel.from_dict(data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["suspension_share"] = dict(self.suspension_share)
        if not math.isfinite(self.storage_bandwidth_mb_s):
            out["storage_bandwidth_mb_s"] = None
        return out

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "PlatformModel":
        data = dict(raw)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown platform model field(s) {sorted(unknown)}")
        if "cold_start" in data:
            data["cold_start"] = Latency.parse(data["cold_start"])
        if data.get("storage_bandwidth_mb_s") is None:
            data.pop("storage_bandwidth_mb_s", None)
        if "suspension_share" in data and isinstance(data["suspension_share"], (int, float)):
            data["suspension_share"] = {"default": float(data["suspension_share"])}
        if isinstance(data.get("suspension_share"), Mapping):
            data["suspension_share"] = {str(k): float(v) for k, v in data["suspension_share"].items()}
        return cls(**data)


BUILTIN_MODELS = ("aws-like", "gcp-like", "azure-like")


def load_model(name_or_path: str | Path) -> PlatformModel:
    """Load a builtin model by name or a JSON model file by path."""
    if str(name_or_path) in BUILTIN_MODELS:
        text = resources.files("wfbench.sim").joinpath("models", f"{name_or_path}.json").read_text()
    else:
        path = Path(name_or_path)
        if not path.is_file():
            raise FileNotFoundError(f"platform model {str(name_or_path)!r} is neither a builtin nor a file")
        text = path.read_text()
    return PlatformModel.from_dict(json.loads(text))
