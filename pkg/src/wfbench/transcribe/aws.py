"""AWS state-machine (Amazon States Language) transcription."""

from __future__ import annotations

import json
from typing import Any

from ..definition import MAX_PARALLELISM, Guard, Phase, WorkflowDefinition
from . import PlatformProgram, check_transcribable, make_census

LAMBDA_INVOKE = "arn:aws:states:::lambda:invoke"

_NUMERIC = {
    "<": "NumericLessThan",
    "<=": "NumericLessThanEquals",
    "==": "NumericEquals",
    ">=": "NumericGreaterThanEquals",
    ">": "NumericGreaterThan",
}


def choice_rule(guard: Guard, target: str) -> dict:
    var = "$." + guard.variable
    if isinstance(guard.value, str):
        rule: dict[str, Any] = {"Variable": var, "StringEquals": guard.value}
    else:
        op = "==" if guard.op == "!=" else guard.op
        rule = {"Variable": var, _NUMERIC[op]: guard.value}
    if guard.op == "!=":
        rule = {"Not": rule}
    rule["Next"] = target
    return rule


def _task(func: str) -> dict:
    return {
        "Type": "Task",
        "Resource": LAMBDA_INVOKE,
        "Parameters": {"FunctionName": func, "Payload.$": "$"},
        "OutputPath": "$.Payload",
    }


def _chain(states: dict, names: list[str], bodies: list[dict]) -> None:
    for i, (n, body) in enumerate(zip(names, bodies)):
        if i + 1 < len(names):
            body["Next"] = names[i + 1]
        states[n] = body


class _Emitter:
    def __init__(self, defn: WorkflowDefinition):
        self.defn = defn
        self.notes: list[dict] = []

    def entry(self, name: str) -> str:
        p = self.defn.phases[name]
        return f"{name}_0" if p.kind == "repeat" else name

    def phase(self, p: Phase, states: dict, follow: str | None) -> None:
        """Emit the states of ``p`` into ``states``; ``follow`` is the next state or None for End."""
        if p.kind == "task":
            body = _task(p.func[0])
            if p.on_error:
                body["Catch"] = [
                    {"ErrorEquals": ["States.ALL"], "ResultPath": "$.error", "Next": self.entry(p.on_error)}
                ]
            states[p.name] = body
            last = [body]
        elif p.kind in ("map", "loop"):
            inner: dict = {}
            names = [f"{p.name}_{i}_{f}" for i, f in enumerate(p.func)]
            bodies = [_task(f) for f in p.func]
            _chain(inner, names, bodies)
            bodies[-1]["End"] = True
            body: dict[str, Any] = {
                "Type": "Map",
                "ItemsPath": "$." + (p.array or ""),
                "MaxConcurrency": MAX_PARALLELISM["aws"] if p.kind == "map" else 1,
                "ItemProcessor": {
                    "ProcessorConfig": {"Mode": "INLINE"},
                    "StartAt": names[0],
                    "States": inner,
                },
            }
            if p.common_parameters:
                body["ItemSelector"] = {
                    "item.$": "$$.Map.Item.Value",
                    "common.$": "$." + p.common_parameters,
                }
            if p.kind == "loop":
                self.notes.append(
                    {
                        "code": "LoopPayloadIsolation",
                        "phase": p.name,
                        "message": (
                            "iterations run one at a time on the same input; iteration i+1 "
                            "cannot read the return payload of iteration i except through object storage"
                        ),
                    }
                )
            states[p.name] = body
            last = [body]
        elif p.kind == "repeat":
            names = [f"{p.name}_{i}" for i in range(p.count or 0)]
            bodies = [_task(p.func[0]) for _ in names]
            _chain(states, names, bodies)
            last = bodies[-1:]
        elif p.kind == "switch":
            body = {
                "Type": "Choice",
                "Choices": [choice_rule(c.guard, self.entry(c.next)) for c in p.cases if c.guard and c.next],
            }
            if p.default:
                body["Default"] = self.entry(p.default)
            states[p.name] = body
            return
        elif p.kind == "parallel":
            branches = []
            for branch in p.branches:
                bstates: dict = {}
                for i, member in enumerate(branch):
                    nxt = self.entry(branch[i + 1]) if i + 1 < len(branch) else None
                    self.phase(self.defn.phases[member], bstates, nxt)
                branches.append({"StartAt": self.entry(branch[0]), "States": bstates})
            body = {"Type": "Parallel", "Branches": branches}
            states[p.name] = body
            last = [body]
        else:  # pragma: no cover - kinds are validated at parse time
            raise ValueError(p.kind)
        for b in last:
            if follow is None:
                b["End"] = True
            else:
                b["Next"] = follow


def _top_level_states(states: dict) -> int:
    """States that stand for workflow phases; map iterators are part of their Map state."""
    n = 0
    for body in states.values():
        n += 1
        for br in body.get("Branches", ()):
            n += _top_level_states(br["States"])
    return n


def to_aws(defn: WorkflowDefinition) -> PlatformProgram:
    check_transcribable(defn, "aws")
    em = _Emitter(defn)
    states: dict = {}
    inner = defn.branch_members()
    for name, p in defn.phases.items():
        if name in inner:
            continue
        follow = em.entry(p.next) if p.next else None
        em.phase(p, states, follow)
    doc = {
        "Comment": f"workflow {defn.name}",
        "StartAt": em.entry(defn.root),
        "States": states,
    }
    text = json.dumps(doc, indent=2) + "\n"
    json.loads(text)  # self-parse check
    return PlatformProgram(
        platform="aws",
        document=text,
        census=make_census("aws", defn, _top_level_states(states)),
        notes=tuple(em.notes),
    )
