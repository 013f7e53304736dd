"""Platform-agnostic workflow definitions: types, parsing, serialization, validation.

A definition document is a mapping with ``name``, ``root`` and ``phases``.
Each phase has a ``type`` (task, map, loop, repeat, switch, parallel) and an
optional ``next``; the workflow terminates after a phase without ``next``.
Documents are accepted as JSON (canonical) or YAML (indentation-based).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Iterable, Iterator, Mapping

import yaml

PHASE_KINDS = ("task", "map", "loop", "repeat", "switch", "parallel")
COMPARATORS = ("<", "<=", "==", "!=", ">=", ">")

# Per-platform limit on concurrently executed map elements / parallel branches.
MAX_PARALLELISM = {"aws": 40, "google": 20, "azure": None}
PLATFORM_LABEL = {"aws": "AWS", "google": "Google", "azure": "Azure"}


class DefinitionSyntaxError(ValueError):
    """Malformed document text."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class SchemaError(ValueError):
    """Document is well-formed but does not match the definition schema."""


class ResourceAnnotation(str, enum.Enum):
    OBJECT_STORAGE = "object_storage"
    INVOCATION_PAYLOAD = "invocation_payload"
    TRANSPARENT = "transparent"
    REFERENCE = "reference"


@dataclass(frozen=True)
class Guard:
    variable: str
    op: str
    value: Any

    def evaluate(self, payload: Any) -> bool:
        """Compare the payload value at ``variable`` against the literal.

        Raises KeyError if the variable is absent from the payload.
        """
        actual = get_path(payload, self.variable)
        lhs, rhs = _comparable(actual), _comparable(self.value)
        if self.op == "==":
            return lhs == rhs
        if self.op == "!=":
            return lhs != rhs
        try:
            if self.op == "<":
                return lhs < rhs
            if self.op == "<=":
                return lhs <= rhs
            if self.op == ">=":
                return lhs >= rhs
            if self.op == ">":
                return lhs > rhs
        except TypeError:
            return False
        raise ValueError(f"unknown comparator {self.op!r}")

    def to_dict(self) -> dict:
        return {"var": self.variable, "op": self.op, "value": self.value}

    def __str__(self) -> str:
        return f"{self.variable} {self.op} {self.value!r}"


def _comparable(value: Any) -> Any:
    # exact decimal comparison, no epsilon
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return Decimal(str(value))
    return value


@dataclass(frozen=True)
class Case:
    guard: Guard | None
    next: str | None
    compound: tuple[Guard, ...] = ()

    def to_dict(self) -> dict:
        if self.compound:
            out: dict[str, Any] = {"and": [g.to_dict() for g in self.compound]}
        else:
            out = self.guard.to_dict() if self.guard else {}
        if self.next is not None:
            out["next"] = self.next
        return out


@dataclass(frozen=True)
class Phase:
    name: str
    kind: str
    next: str | None = None
    func: tuple[str, ...] = ()
    array: str | None = None
    common_parameters: str | None = None
    count: int | None = None
    cases: tuple[Case, ...] = ()
    default: str | None = None
    branches: tuple[tuple[str, ...], ...] = ()
    on_error: str | None = None

    @property
    def chain_length(self) -> int:
        return len(self.func)

    def successors(self) -> list[str]:
        """Every phase name this phase may hand control to."""
        out = []
        if self.next:
            out.append(self.next)
        for case in self.cases:
            if case.next:
                out.append(case.next)
        if self.default:
            out.append(self.default)
        if self.on_error:
            out.append(self.on_error)
        return out

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"type": self.kind}
        if self.func:
            out["func"] = self.func[0] if len(self.func) == 1 else list(self.func)
        if self.array is not None:
            out["array"] = self.array
        if self.common_parameters is not None:
            out["common_parameters"] = self.common_parameters
        if self.count is not None:
            out["count"] = self.count
        if self.cases:
            out["cases"] = [c.to_dict() for c in self.cases]
        if self.default is not None:
            out["default"] = self.default
        if self.branches:
            out["branches"] = [list(b) for b in self.branches]
        if self.on_error is not None:
            out["on_error"] = self.on_error
        if self.next is not None:
            out["next"] = self.next
        return out


@dataclass(frozen=True)
class FunctionSpec:
    name: str
    reads: Mapping[str, ResourceAnnotation] = field(default_factory=dict)
    writes: Mapping[str, ResourceAnnotation] = field(default_factory=dict)
    destroys: tuple[str, ...] = ()
    binding: str | None = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        if self.reads:
            out["reads"] = {k: v.value for k, v in self.reads.items()}
        if self.writes:
            out["writes"] = {k: v.value for k, v in self.writes.items()}
        if self.destroys:
            out["destroys"] = list(self.destroys)
        if self.binding is not None:
            out["binding"] = self.binding
        return out


@dataclass(frozen=True)
class WorkflowDefinition:
    name: str
    root: str
    phases: Mapping[str, Phase]
    functions: Mapping[str, FunctionSpec] = field(default_factory=dict)
    # duplicate-key and similar findings from parsing, surfaced by validate()
    parse_issues: tuple[str, ...] = field(default=(), compare=False)

    def __getitem__(self, name: str) -> Phase:
        return self.phases[name]

    def function_names(self) -> list[str]:
        seen: dict[str, None] = {}
        for phase in self.phases.values():
            for f in phase.func:
                seen.setdefault(f, None)
        return list(seen)

    def branch_members(self) -> dict[str, str]:
        """Map each phase that lives inside a parallel branch to its parallel phase."""
        out = {}
        for phase in self.phases.values():
            for branch in phase.branches:
                for member in branch:
                    out[member] = phase.name
        return out

    def terminal_phases(self) -> list[str]:
        inner = self.branch_members()
        return [
            p.name
            for p in self.phases.values()
            if p.next is None and p.kind != "switch" and p.name not in inner
        ]

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "name": self.name,
            "root": self.root,
            "phases": {n: p.to_dict() for n, p in self.phases.items()},
        }
        if self.functions:
            out["functions"] = {n: f.to_dict() for n, f in self.functions.items()}
        return out


# ---------------------------------------------------------------------------
# payload paths

def get_path(payload: Any, path: str) -> Any:
    """Resolve a dot-separated path (``data.length``) in a tree-shaped payload.

    An empty path or ``$`` addresses the payload itself.
    """
    if path in ("", "$"):
        return payload
    node = payload
    for seg in path.split("."):
        if isinstance(node, Mapping):
            if seg not in node:
                raise KeyError(path)
            node = node[seg]
        elif isinstance(node, (list, tuple)) and seg.lstrip("-").isdigit():
            try:
                node = node[int(seg)]
            except IndexError:
                raise KeyError(path) from None
        elif seg == "length" and isinstance(node, (list, tuple, str)):
            node = len(node)
        else:
            raise KeyError(path)
    return node


# ---------------------------------------------------------------------------
# parsing

class _DupCollector:
    def __init__(self) -> None:
        self.issues: list[str] = []

    def json_hook(self, pairs: list[tuple[str, Any]]) -> dict:
        out: dict[str, Any] = {}
        for k, v in pairs:
            if k in out:
                self.issues.append(f"duplicate key {k!r}")
            out[k] = v
        return out


class _DupSafeLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader: _DupSafeLoader, node: yaml.MappingNode, deep: bool = False):
    seen: set = set()
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            loader.dup_issues.append(f"duplicate key {key!r}")  # type: ignore[attr-defined]
        seen.add(key)
    return loader.construct_mapping(node, deep=deep)


_DupSafeLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def load_document(text: str) -> tuple[Any, list[str]]:
    """Decode JSON or YAML text; returns the raw object and duplicate-key findings."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        dups = _DupCollector()
        try:
            return json.loads(text, object_pairs_hook=dups.json_hook), dups.issues
        except json.JSONDecodeError as exc:
            raise DefinitionSyntaxError(exc.msg, exc.lineno, exc.colno) from exc
    loader = _DupSafeLoader(text)
    loader.dup_issues = []  # type: ignore[attr-defined]
    try:
        data = loader.get_single_data()
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise DefinitionSyntaxError(str(exc.problem or exc), line, col) from exc
    except yaml.YAMLError as exc:
        raise DefinitionSyntaxError(str(exc)) from exc
    finally:
        loader.dispose()
    return data, loader.dup_issues  # type: ignore[attr-defined]


def _need(obj: Mapping, key: str, typ: type | tuple, where: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{where}: missing required field {key!r}")
    value = obj[key]
    if not isinstance(value, typ) or isinstance(value, bool) and typ is not bool:
        raise SchemaError(f"{where}: field {key!r} has wrong type {type(value).__name__}")
    return value


def _opt(obj: Mapping, key: str, typ: type | tuple, where: str) -> Any:
    if key not in obj or obj[key] is None:
        return None
    return _need(obj, key, typ, where)


_PHASE_FIELDS = {
    "task": {"func"},
    "map": {"func", "array", "common_parameters"},
    "loop": {"func", "array", "common_parameters"},
    "repeat": {"func", "count"},
    "switch": {"cases", "default"},
    "parallel": {"branches"},
}


def _parse_guard(obj: Mapping, where: str) -> Guard:
    var = _need(obj, "var", str, where)
    op = _need(obj, "op", str, where)
    if op not in COMPARATORS:
        raise SchemaError(f"{where}: unknown comparator {op!r}")
    if "value" not in obj:
        raise SchemaError(f"{where}: missing required field 'value'")
    value = obj["value"]
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise SchemaError(f"{where}: guard literal must be a number or string")
    return Guard(var, op, value)


def _parse_phase(name: str, obj: Any) -> Phase:
    where = f"phase {name!r}"
    if not isinstance(obj, Mapping):
        raise SchemaError(f"{where}: expected an object")
    kind = _need(obj, "type", str, where)
    if kind not in PHASE_KINDS:
        raise SchemaError(f"{where}: unknown phase type {kind!r}")
    allowed = _PHASE_FIELDS[kind] | {"type", "next", "on_error"}
    extra = set(obj) - allowed
    if extra:
        raise SchemaError(f"{where}: unexpected field(s) {sorted(extra)} for type {kind!r}")

    kw: dict[str, Any] = {
        "next": _opt(obj, "next", str, where),
        "on_error": _opt(obj, "on_error", str, where),
    }
    if kind in ("task", "map", "loop", "repeat"):
        func = _need(obj, "func", (str, list), where)
        if isinstance(func, str):
            func = [func]
        if kind != "map" and len(func) != 1:
            raise SchemaError(f"{where}: only map phases accept a function chain")
        if not func or not all(isinstance(f, str) and f for f in func):
            raise SchemaError(f"{where}: 'func' must name one or more functions")
        kw["func"] = tuple(func)
    if kind in ("map", "loop"):
        kw["array"] = _need(obj, "array", str, where)
        kw["common_parameters"] = _opt(obj, "common_parameters", str, where)
    if kind == "repeat":
        kw["count"] = _need(obj, "count", int, where)
    if kind == "switch":
        raw_cases = _need(obj, "cases", list, where)
        cases = []
        for i, c in enumerate(raw_cases):
            cw = f"{where} case {i}"
            if not isinstance(c, Mapping):
                raise SchemaError(f"{cw}: expected an object")
            target = _opt(c, "next", str, cw)
            if "and" in c:
                parts = _need(c, "and", list, cw)
                guards = tuple(_parse_guard(p, cw) for p in parts)
                cases.append(Case(None, target, guards))
            else:
                cases.append(Case(_parse_guard(c, cw), target))
        kw["cases"] = tuple(cases)
        kw["default"] = _opt(obj, "default", str, where)
    if kind == "parallel":
        raw = _need(obj, "branches", list, where)
        branches = []
        for b in raw:
            if isinstance(b, str):
                b = [b]
            if not isinstance(b, list) or not all(isinstance(x, str) for x in b):
                raise SchemaError(f"{where}: each branch must be a list of phase names")
            branches.append(tuple(b))
        kw["branches"] = tuple(branches)
    return Phase(name=name, kind=kind, **kw)


def _parse_functions(obj: Any) -> dict[str, FunctionSpec]:
    if obj is None:
        return {}
    if not isinstance(obj, Mapping):
        raise SchemaError("'functions' must be an object")
    out = {}
    for name, spec in obj.items():
        where = f"function {name!r}"
        if not isinstance(spec, Mapping):
            raise SchemaError(f"{where}: expected an object")

        def annotations(key: str) -> dict[str, ResourceAnnotation]:
            raw = _opt(spec, key, dict, where) or {}
            res = {}
            for data, channel in raw.items():
                try:
                    res[data] = ResourceAnnotation(channel)
                except ValueError:
                    raise SchemaError(f"{where}: unknown resource annotation {channel!r}") from None
            return res

        destroys = _opt(spec, "destroys", list, where) or []
        out[name] = FunctionSpec(
            name=name,
            reads=annotations("reads"),
            writes=annotations("writes"),
            destroys=tuple(destroys),
            binding=_opt(spec, "binding", str, where),
        )
    return out


def definition_from_dict(doc: Any, issues: Iterable[str] = ()) -> WorkflowDefinition:
    if not isinstance(doc, Mapping):
        raise SchemaError("definition must be an object")
    extra = set(doc) - {"name", "root", "phases", "functions"}
    if extra:
        raise SchemaError(f"unexpected top-level field(s) {sorted(extra)}")
    name = _need(doc, "name", str, "definition")
    root = _need(doc, "root", str, "definition")
    raw_phases = _need(doc, "phases", dict, "definition")
    phases = {str(n): _parse_phase(str(n), p) for n, p in raw_phases.items()}
    return WorkflowDefinition(
        name=name,
        root=root,
        phases=phases,
        functions=_parse_functions(doc.get("functions")),
        parse_issues=tuple(issues),
    )


def parse_definition(document: str) -> WorkflowDefinition:
    """Parse a definition document (JSON or YAML text)."""
    data, issues = load_document(document)
    return definition_from_dict(data, issues)


def serialize(defn: WorkflowDefinition, fmt: str = "json") -> str:
    doc = defn.to_dict()
    if fmt == "json":
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "yaml":
        return yaml.safe_dump(doc, sort_keys=False)
    raise ValueError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    phase: str | None = None

    def __str__(self) -> str:
        where = f"[{self.phase}] " if self.phase else ""
        return f"{self.code}: {where}{self.message}"


@dataclass
class ValidationReport:
    errors: list[Finding] = field(default_factory=list)
    warnings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> set[str]:
        return {f.code for f in self.errors}

    def lines(self) -> Iterator[str]:
        for f in self.errors:
            yield f"error {f}"
        for f in self.warnings:
            yield f"warning {f}"


# Findings that mark a construct the transcribers cannot express.
UNTRANSCRIBABLE_CODES = frozenset({"CompoundGuard", "TerminalSwitchCase"})


def validate(defn: WorkflowDefinition, fanouts: Mapping[str, int] | None = None) -> ValidationReport:
    """Check the definition invariants; never raises.

    ``fanouts`` optionally gives concrete map/loop widths, used for the
    per-platform parallelism warnings.
    """
    report = ValidationReport()
    err = lambda code, msg, phase=None: report.errors.append(Finding(code, msg, phase))  # noqa: E731
    phases = defn.phases

    for issue in defn.parse_issues:
        err("SchemaError", issue)

    if defn.root not in phases:
        err("DanglingReference", f"root {defn.root!r} is not a declared phase")

    members = defn.branch_members()
    seen_in_branch: dict[str, str] = {}

    for p in phases.values():
        for target in p.successors():
            if target not in phases:
                err("DanglingReference", f"reference to missing phase {target!r}", p.name)
        if p.next == p.name:
            err("SelfReference", "phase is its own next", p.name)
        if p.on_error is not None and p.kind != "task":
            err("SchemaError", "on_error is only supported on task phases", p.name)

        if p.kind == "repeat" and (p.count is None or p.count < 1):
            err("SchemaError", "repeat count must be >= 1", p.name)
        if p.kind in ("map", "loop") and not p.array:
            err("SchemaError", "array path must be non-empty", p.name)
        if p.kind == "switch":
            if not p.cases:
                err("SchemaError", "switch needs at least one case", p.name)
            if p.next is not None:
                err("SchemaError", "switch decides its successor; 'next' is not allowed", p.name)
            for i, case in enumerate(p.cases):
                if case.compound:
                    err(
                        "CompoundGuard",
                        f"case {i} combines {len(case.compound)} conditions; only single comparisons are supported",
                        p.name,
                    )
                elif case.guard is not None:
                    g = case.guard
                    if isinstance(g.value, str) and g.op not in ("==", "!="):
                        err("SchemaError", f"case {i}: string literal needs == or !=, got {g.op}", p.name)
                if case.next is None:
                    err("TerminalSwitchCase", f"case {i} has no target; a switch cannot end the workflow", p.name)
        if p.kind == "parallel":
            if not p.branches:
                err("SchemaError", "parallel needs at least one branch", p.name)
            for branch in p.branches:
                if not branch:
                    err("SchemaError", "empty branch", p.name)
                for member in branch:
                    if member in seen_in_branch:
                        err("SchemaError", f"branches overlap on phase {member!r}", p.name)
                    seen_in_branch[member] = p.name
                    m = phases.get(member)
                    if m is None:
                        err("DanglingReference", f"branch references missing phase {member!r}", p.name)
                        continue
                    if m.kind in ("parallel", "switch"):
                        err("SchemaError", f"branch phase {member!r} of type {m.kind} is not supported", p.name)
                    if m.next is not None or m.on_error is not None:
                        err("SchemaError", f"branch phase {member!r} must not set next/on_error", p.name)

    for member, owner in members.items():
        for q in phases.values():
            if member in q.successors():
                err("SchemaError", f"phase {member!r} is inside a branch of {owner!r} but also chained", q.name)

    if defn.root in phases:
        reach = reachable(defn)
        for name in phases:
            if name not in reach:
                err("Unreachable", "phase is not reachable from root", name)
        cycle = _find_cycle(defn)
        if cycle:
            err("Cycle", " -> ".join(cycle))

    for fn in defn.functions.values():
        for d in fn.destroys:
            if d in fn.writes:
                err("SchemaError", f"function {fn.name!r} writes and destroys {d!r}")

    if fanouts:
        for name, width in fanouts.items():
            p = phases.get(name)
            if p is None or p.kind not in ("map", "parallel"):
                continue
            for platform, limit in MAX_PARALLELISM.items():
                if limit is not None and width > limit:
                    report.warnings.append(
                        Finding(
                            "Parallelism",
                            f"fan-out {width} exceeds {PLATFORM_LABEL[platform]} max parallelism {limit}",
                            name,
                        )
                    )
    for p in phases.values():
        if p.kind == "parallel":
            for platform, limit in MAX_PARALLELISM.items():
                if limit is not None and len(p.branches) > limit:
                    report.warnings.append(
                        Finding(
                            "Parallelism",
                            f"{len(p.branches)} branches exceed {PLATFORM_LABEL[platform]} max parallelism {limit}",
                            p.name,
                        )
                    )
    return report


def reachable(defn: WorkflowDefinition) -> set[str]:
    seen: set[str] = set()
    stack = [defn.root]
    while stack:
        name = stack.pop()
        if name in seen or name not in defn.phases:
            continue
        seen.add(name)
        p = defn.phases[name]
        stack.extend(p.successors())
        for branch in p.branches:
            stack.extend(branch)
    return seen


def _find_cycle(defn: WorkflowDefinition) -> list[str] | None:
    state: dict[str, int] = {}
    trail: list[str] = []

    def visit(name: str) -> list[str] | None:
        state[name] = 1
        trail.append(name)
        for nxt in defn.phases[name].successors():
            if nxt not in defn.phases:
                continue
            if state.get(nxt) == 1:
                return trail[trail.index(nxt):] + [nxt]
            if nxt not in state:
                found = visit(nxt)
                if found:
                    return found
        trail.pop()
        state[name] = 2
        return None

    for name in defn.phases:
        if name not in state:
            found = visit(name)
            if found:
                return found
    return None


# ---------------------------------------------------------------------------
# structure along one execution path

@dataclass(frozen=True)
class Structure:
    function_count: int
    parallelism: int
    phases: int


def execution_path(
    defn: WorkflowDefinition,
    failures: Iterable[str] = (),
    choices: Mapping[str, str] | None = None,
) -> list[str]:
    """Top-level phase names visited in order.

    ``failures`` names task phases whose function fails (routing to
    ``on_error``); ``choices`` fixes switch outcomes (default: first case).
    """
    failures = set(failures)
    choices = dict(choices or {})
    path = []
    name: str | None = defn.root
    while name is not None:
        p = defn.phases[name]
        path.append(name)
        if p.kind == "switch":
            name = choices.get(name) or (p.cases[0].next if p.cases else p.default)
        elif name in failures:
            name = p.on_error
        else:
            name = p.next
    return path


def _phase_width(p: Phase, fanouts: Mapping[str, int]) -> int:
    if p.kind in ("map", "loop"):
        if p.name not in fanouts:
            raise KeyError(f"no fan-out given for {p.kind} phase {p.name!r}")
        return int(fanouts[p.name])
    return 1


def _functions_in(defn: WorkflowDefinition, p: Phase, fanouts: Mapping[str, int]) -> int:
    if p.kind == "task":
        return 1
    if p.kind in ("map", "loop"):
        return _phase_width(p, fanouts) * p.chain_length
    if p.kind == "repeat":
        return p.count or 0
    if p.kind == "parallel":
        return sum(_functions_in(defn, defn.phases[m], fanouts) for b in p.branches for m in b)
    return 0


def _concurrency(defn: WorkflowDefinition, p: Phase, fanouts: Mapping[str, int]) -> int:
    if p.kind == "map":
        return _phase_width(p, fanouts)
    if p.kind in ("task", "loop", "repeat"):
        return 1
    if p.kind == "parallel":
        return sum(max(_concurrency(defn, defn.phases[m], fanouts) for m in b) for b in p.branches)
    return 0


def structure(
    defn: WorkflowDefinition,
    fanouts: Mapping[str, int],
    failures: Iterable[str] = (),
    choices: Mapping[str, str] | None = None,
) -> Structure:
    """Function executions, peak concurrency and phase count along one path."""
    path = [defn.phases[n] for n in execution_path(defn, failures, choices)]
    work = [p for p in path if p.kind != "switch"]
    return Structure(
        function_count=sum(_functions_in(defn, p, fanouts) for p in work),
        parallelism=max((_concurrency(defn, p, fanouts) for p in work), default=0),
        phases=len(work),
    )
