"""Azure orchestrator payload.

Azure needs no translation: a generic orchestrator parses the canonical
definition and spawns activity executions itself. The payload is the
canonical serialization; the manifest lists the activities it may call.
"""

from __future__ import annotations

import json

from ..definition import WorkflowDefinition, serialize
from . import PlatformProgram, check_transcribable, make_census


def activity_manifest(defn: WorkflowDefinition) -> dict:
    activities: dict[str, dict] = {}
    for p in defn.phases.values():
        for f in p.func:
            entry = activities.setdefault(f, {"function": f, "phases": []})
            width: int | str = "runtime" if p.kind in ("map", "loop") else (p.count or 1)
            entry["phases"].append({"phase": p.name, "kind": p.kind, "width": width})
    return {"orchestrator": "generic", "workflow": defn.name, "activities": list(activities.values())}


def to_azure(defn: WorkflowDefinition) -> PlatformProgram:
    check_transcribable(defn, "azure")
    text = serialize(defn, "json")
    json.loads(text)
    manifest = json.dumps(activity_manifest(defn), indent=2) + "\n"
    return PlatformProgram(
        platform="azure",
        document=text,
        census=make_census("azure", defn, len(defn.phases)),
        extras={"manifest.json": manifest},
    )
