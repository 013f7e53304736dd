"""Google Cloud Workflows transcription.

Functions are reached through HTTP triggers, so every task becomes a POST
call step followed by a step that assigns the parsed response. A map runs
a parallel ``for`` over a generated sub-workflow, even for a single
function, after zipping the input array with the common parameters.
"""

from __future__ import annotations

import json
from typing import Any

import yaml

from ..definition import Guard, Phase, WorkflowDefinition
from . import PlatformProgram, check_transcribable, make_census

Step = dict[str, Any]


def condition(guard: Guard) -> str:
    value = json.dumps(guard.value) if isinstance(guard.value, str) else guard.value
    return f"${{state.{guard.variable} {guard.op} {value}}}"


def _call(name: str, func: str, result: str, body: str = "${state}") -> Step:
    return {
        name: {
            "call": "http.post",
            "args": {"url": f"${{urls.{func}}}", "body": body},
            "result": result,
        }
    }


def _call_assign(prefix: str, func: str, target: str = "state") -> list[Step]:
    return [
        _call(f"{prefix}_call", func, f"{prefix}_resp"),
        {f"{prefix}_assign": {"assign": [{target: f"${{{prefix}_resp.body}}"}]}},
    ]


def _set_next(steps: list[Step], target: str) -> None:
    (body,) = steps[-1].values()
    body["next"] = target


class _Emitter:
    def __init__(self, defn: WorkflowDefinition):
        self.defn = defn
        self.subworkflows: dict[str, Any] = {}

    def entry(self, name: str) -> str:
        p = self.defn.phases[name]
        return {
            "task": f"{name}_call",
            "map": f"{name}_zip",
            "repeat": f"{name}_0_call",
        }.get(p.kind, name)

    def steps(self, p: Phase) -> list[Step]:
        n = p.name
        if p.kind == "task":
            out = _call_assign(n, p.func[0])
            if p.on_error:
                call = out[0][f"{n}_call"]
                out[0] = {
                    f"{n}_call": {
                        "try": call,
                        "except": {
                            "as": "e",
                            "steps": [{f"{n}_failed": {"next": self.entry(p.on_error)}}],
                        },
                    }
                }
            return out
        if p.kind == "map":
            sub = f"{n}_sub"
            body: list[Step] = []
            for j, func in enumerate(p.func):
                body.extend(_call_assign(f"{n}_{j}", func, target="item"))
            body.append({f"{n}_return": {"return": "${item}"}})
            self.subworkflows[sub] = {"params": ["item"], "steps": body}
            common = f"state.{p.common_parameters}" if p.common_parameters else "null"
            return [
                {f"{n}_zip": {"assign": [{f"{n}_args": f"${{zip(state.{p.array}, {common})}}"}]}},
                {f"{n}_init": {"assign": [{f"{n}_results": []}]}},
                {
                    n: {
                        "parallel": {
                            "shared": [f"{n}_results"],
                            "for": {
                                "value": "arg",
                                "in": f"${{{n}_args}}",
                                "steps": [
                                    {f"{n}_iter": {"call": sub, "args": {"item": "${arg}"}, "result": "r"}},
                                    {
                                        f"{n}_append": {
                                            "assign": [{f"{n}_results": f"${{list.concat({n}_results, r)}}"}]
                                        }
                                    },
                                ],
                            },
                        }
                    }
                },
                {f"{n}_collect": {"assign": [{"state": f"${{{n}_results}}"}]}},
            ]
        if p.kind == "loop":
            return [
                {
                    n: {
                        "for": {
                            "value": "item",
                            "in": f"${{state.{p.array}}}",
                            "steps": _call_assign(f"{n}_body", p.func[0]),
                        }
                    }
                }
            ]
        if p.kind == "repeat":
            out = []
            for i in range(p.count or 0):
                out.extend(_call_assign(f"{n}_{i}", p.func[0]))
            return out
        if p.kind == "switch":
            rules = [{"condition": condition(c.guard), "next": self.entry(c.next)} for c in p.cases if c.guard and c.next]
            sw: dict[str, Any] = {"switch": rules}
            out = [{n: sw}]
            if p.default:
                sw["next"] = self.entry(p.default)
            else:
                sw["next"] = f"{n}_nomatch"
                out.append({f"{n}_nomatch": {"raise": f"no case of {n} matched"}})
            return out
        if p.kind == "parallel":
            branches = []
            for i, branch in enumerate(p.branches):
                bsteps: list[Step] = []
                for member in branch:
                    bsteps.extend(self.steps(self.defn.phases[member]))
                branches.append({f"{n}_branch{i}": {"steps": bsteps}})
            return [{n: {"parallel": {"shared": ["state"], "branches": branches}}}]
        raise ValueError(p.kind)  # pragma: no cover


def count_steps(steps: list[Step]) -> int:
    """Steps generated for phases, including nested bodies; except-jumps excluded."""
    n = 0
    for step in steps:
        (body,) = step.values()
        n += 1
        if "for" in body:
            n += count_steps(body["for"]["steps"])
        par = body.get("parallel", {})
        if "for" in par:
            n += count_steps(par["for"]["steps"])
        for br in par.get("branches", ()):
            (b,) = br.values()
            n += count_steps(b["steps"])
    return n


def to_google(defn: WorkflowDefinition) -> PlatformProgram:
    check_transcribable(defn, "google")
    em = _Emitter(defn)
    inner = defn.branch_members()
    phase_steps: list[Step] = []
    for name, p in defn.phases.items():
        if name in inner:
            continue
        steps = em.steps(p)
        if p.kind != "switch":
            _set_next(steps, em.entry(p.next) if p.next else "finish")
        phase_steps.extend(steps)
    main = {
        "params": ["input"],
        "steps": [
            {"init": {"assign": [{"state": "${input}"}], "next": em.entry(defn.root)}},
            *phase_steps,
            {"finish": {"return": "${state}"}},
        ],
    }
    doc = {"main": main, **em.subworkflows}
    text = json.dumps(doc, indent=2) + "\n"
    json.loads(text)  # self-parse check
    rendered_yaml = yaml.safe_dump(doc, sort_keys=False)
    yaml.safe_load(rendered_yaml)
    state_count = count_steps(phase_steps) + sum(count_steps(s["steps"]) for s in em.subworkflows.values())
    return PlatformProgram(
        platform="google",
        document=text,
        census=make_census("google", defn, state_count),
        extras={"workflow.yaml": rendered_yaml},
    )
