"""Workflow nets with data built from workflow definitions.

One net is built per instantiation: map and loop widths come from the
concrete input, so every function execution slot is its own transition.
Coordinator transitions sit between phases only where both sides have
several transitions; elsewhere the single function on one side already
performs the AND-split or AND-join, and the coordinator is elided.

Node ids are canonical and shared with the simulator's traces:

* ``c0``, ``c:<phase>``, ``c:end`` -- coordinators
* ``f:<phase>``, ``f:<phase>[i]``, ``f:<phase>[i].j``, ``f:<phase>#i`` -- functions
* ``g:<phase>:<case>``, ``g:<phase>:default``, ``g:<phase>:ok``/``err`` -- routing
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .definition import Guard, Phase, WorkflowDefinition, get_path

COORDINATOR = "coordinator"
FUNCTION = "function"
START, END = "start", "end"


class FanoutMissing(KeyError):
    pass


class UnknownTransition(KeyError):
    pass


class Deadlock(RuntimeError):
    def __init__(self, message: str, sequence: "FiringSequence"):
        super().__init__(message)
        self.sequence = sequence


class GuardUnresolvable(KeyError):
    pass


class ReplayError(ValueError):
    pass


@dataclass(frozen=True)
class Transition:
    id: str
    kind: str
    phase: str | None = None
    function: str | None = None


@dataclass(frozen=True)
class SwitchRoute:
    """Guard of a switch routing transition: fires iff its case is the first match."""

    cases: tuple[Guard, ...]
    index: int | None  # None for the default route

    def evaluate(self, data: Any) -> bool:
        for i, g in enumerate(self.cases):
            if g.evaluate(data):
                return i == self.index
        return self.index is None

    @property
    def variables(self) -> list[str]:
        return [g.variable for g in self.cases]

    def __str__(self) -> str:
        if self.index is None:
            return "default"
        return str(self.cases[self.index])


@dataclass(frozen=True)
class FailureRoute:
    """Guard routing a task's outcome to its successor or its failure handler."""

    phase: str
    failed: bool

    @property
    def variable(self) -> str:
        return f"__failed__.{self.phase}"

    def evaluate(self, data: Any) -> bool:
        return bool(get_path(data, self.variable)) == self.failed

    @property
    def variables(self) -> list[str]:
        return [self.variable]

    def __str__(self) -> str:
        return f"{self.variable} == {int(self.failed)}"


@dataclass
class WfdNet:
    places: list[str]
    transitions: dict[str, Transition]
    arcs: list[tuple[str, str]]
    reads: dict[str, frozenset[str]] = field(default_factory=dict)
    writes: dict[str, frozenset[str]] = field(default_factory=dict)
    destroys: dict[str, frozenset[str]] = field(default_factory=dict)
    guards: dict[str, Any] = field(default_factory=dict)
    # coordinators dropped by the elision rule, kept as zero-duration virtual nodes
    elided: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._pre: dict[str, list[str]] = {}
        self._post: dict[str, list[str]] = {}
        for src, dst in self.arcs:
            self._post.setdefault(src, []).append(dst)
            self._pre.setdefault(dst, []).append(src)

    @property
    def data(self) -> set[str]:
        out: set[str] = set()
        for labels in (self.reads, self.writes, self.destroys):
            for items in labels.values():
                out |= items
        return out

    @property
    def coordinators(self) -> list[str]:
        return [t for t, tr in self.transitions.items() if tr.kind == COORDINATOR]

    @property
    def functions(self) -> list[str]:
        return [t for t, tr in self.transitions.items() if tr.kind == FUNCTION]

    def preset(self, node: str) -> set[str]:
        self._check(node)
        return set(self._pre.get(node, ()))

    def postset(self, node: str) -> set[str]:
        self._check(node)
        return set(self._post.get(node, ()))

    def _check(self, node: str) -> None:
        if node not in self.transitions and node not in self._place_set:
            raise UnknownTransition(node)

    @property
    def _place_set(self) -> set[str]:
        return set(self.places)

    def signature(self) -> tuple:
        """Structural identity used to compare nets."""
        return (
            tuple(self.places),
            tuple(sorted((t.id, t.kind, t.phase or "", t.function or "") for t in self.transitions.values())),
            tuple(sorted(self.arcs)),
        )

    def export_lines(self) -> list[str]:
        """Line-oriented export: ``place``, ``transition`` and ``arc`` records."""
        lines = [f"place {p}" for p in self.places]
        for t in self.transitions.values():
            parts = ["transition", t.id, t.kind]
            if t.phase:
                parts.append(f"phase={t.phase}")
            if t.function:
                parts.append(f"function={t.function}")
            if t.id in self.guards:
                parts.append(f"guard={str(self.guards[t.id]).replace(' ', '')}")
            lines.append(" ".join(parts))
        lines.extend(f"arc {s} {d}" for s, d in self.arcs)
        return lines


# ---------------------------------------------------------------------------
# construction

def boundary_coordinators(n_exits: int, n_entries: int, merged: bool) -> int:
    """Coordinators needed to hand control across one phase boundary.

    ``merged`` means the successor is entered from several predecessors and
    therefore starts at a shared place.
    """
    if merged:
        return int(n_exits > 1) + int(n_entries > 1)
    return int(n_exits > 1 and n_entries > 1)


@dataclass
class _Fragment:
    entry_place: str | None = None
    entries: list[str] = field(default_factory=list)
    exits: list[str] = field(default_factory=list)
    error_exit: str | None = None


class _Builder:
    def __init__(self, defn: WorkflowDefinition, fanouts: Mapping[str, int]):
        self.defn = defn
        self.fanouts = fanouts
        self.places: list[str] = []
        self._place_set: set[str] = set()
        self.transitions: dict[str, Transition] = {}
        self.arcs: list[tuple[str, str]] = []
        self.guards: dict[str, Any] = {}
        self.elided: list[str] = []
        self.fragments: dict[str, _Fragment] = {}
        self.indegree = _indegree(defn)

    def place(self, pid: str) -> str:
        if pid not in self._place_set:
            self._place_set.add(pid)
            self.places.append(pid)
        return pid

    def trans(self, tid: str, kind: str, phase: str | None = None, function: str | None = None) -> str:
        self.transitions[tid] = Transition(tid, kind, phase, function)
        return tid

    def arc(self, src: str, dst: str) -> None:
        self.arcs.append((src, dst))

    def connect(self, src: str, dst: str) -> None:
        """Transition-to-transition arc through a fresh place."""
        p = self.place(f"p:{src}>{dst}")
        self.arc(src, p)
        self.arc(p, dst)

    def link(self, exits: Sequence[str], frag: _Fragment, coordinator_id: str) -> None:
        if frag.entry_place is not None:
            if len(exits) == 1:
                self.arc(exits[0], frag.entry_place)
            else:
                c = self.trans(coordinator_id, COORDINATOR)
                for x in exits:
                    self.connect(x, c)
                self.arc(c, frag.entry_place)
            return
        if len(exits) == 1 or len(frag.entries) == 1:
            if len(exits) > 1 or len(frag.entries) > 1:
                self.elided.append(coordinator_id)
            for x in exits:
                for e in frag.entries:
                    self.connect(x, e)
            return
        c = self.trans(coordinator_id, COORDINATOR)
        for x in exits:
            self.connect(x, c)
        for e in frag.entries:
            self.connect(c, e)

    def width(self, p: Phase) -> int:
        if p.name not in self.fanouts:
            raise FanoutMissing(f"no width supplied for {p.kind} phase {p.name!r}")
        n = int(self.fanouts[p.name])
        if n < 1:
            raise ValueError(f"width of {p.name!r} must be positive, got {n}")
        return n

    def function(self, tid: str, p: Phase, func: str) -> str:
        return self.trans(tid, FUNCTION, p.name, func)

    def compile(self, name: str) -> _Fragment:
        """Fragment of a top-level phase, built once.

        A phase entered from several predecessors starts at a merge place
        (XOR-join); a coordinator leaves that place unless the phase begins
        with a single transition.
        """
        if name in self.fragments:
            return self.fragments[name]
        p = self.defn.phases[name]
        if self.indegree.get(name, 0) <= 1 or p.kind == "switch":
            frag = self._body(p)
            self.fragments[name] = frag
            return frag
        m = self.place(f"p:in:{name}")
        frag = _Fragment(entry_place=m)
        self.fragments[name] = frag  # registered first: cycles through switches
        body = self._body(p)
        if len(body.entries) == 1:
            self.arc(m, body.entries[0])
        else:
            c = self.trans(f"c:{name}", COORDINATOR)
            self.arc(m, c)
            for e in body.entries:
                self.connect(c, e)
        frag.exits = body.exits
        frag.error_exit = body.error_exit
        return frag

    def _body(self, p: Phase) -> _Fragment:
        name = p.name
        if p.kind == "task":
            t = self.function(f"f:{name}", p, p.func[0])
            frag = _Fragment(entries=[t], exits=[t])
            if p.on_error:
                r = self.place(f"p:{t}>route")
                self.arc(t, r)
                ok = self.trans(f"g:{name}:ok", COORDINATOR, name)
                bad = self.trans(f"g:{name}:err", COORDINATOR, name)
                self.guards[ok] = FailureRoute(name, False)
                self.guards[bad] = FailureRoute(name, True)
                self.arc(r, ok)
                self.arc(r, bad)
                frag = _Fragment(entries=[t], exits=[ok], error_exit=bad)
            return frag
        if p.kind == "map":
            n, k = self.width(p), p.chain_length
            entries, exits = [], []
            for i in range(n):
                chain = []
                for j, func in enumerate(p.func):
                    tid = f"f:{name}[{i}]" if k == 1 else f"f:{name}[{i}].{j}"
                    chain.append(self.function(tid, p, func))
                for a, b in zip(chain, chain[1:]):
                    self.connect(a, b)
                entries.append(chain[0])
                exits.append(chain[-1])
            return _Fragment(entries=entries, exits=exits)
        if p.kind in ("loop", "repeat"):
            n = self.width(p) if p.kind == "loop" else int(p.count or 0)
            sep = "[{}]" if p.kind == "loop" else "#{}"
            chain = [self.function(f"f:{name}" + sep.format(i), p, p.func[0]) for i in range(n)]
            for a, b in zip(chain, chain[1:]):
                self.connect(a, b)
            return _Fragment(entries=[chain[0]], exits=[chain[-1]])
        if p.kind == "switch":
            d = self.place(f"p:{name}")
            guards = tuple(c.guard for c in p.cases if c.guard is not None)
            routes: list[tuple[str, str | None, int | None]] = [
                (f"g:{name}:{i}", c.next, i) for i, c in enumerate(p.cases)
            ]
            if p.default:
                routes.append((f"g:{name}:default", p.default, None))
            for gid, target, idx in routes:
                self.trans(gid, COORDINATOR, name)
                self.guards[gid] = SwitchRoute(guards, idx)
                self.arc(d, gid)
                if target is not None:
                    tf = self.compile(target)
                    self.link([gid], tf, f"c:{target}")
            return _Fragment(entry_place=d)
        if p.kind == "parallel":
            entries, exits = [], []
            for branch in p.branches:
                first = self._body(self.defn.phases[branch[0]])
                entries.extend(first.entries)
                prev = first
                for member in branch[1:]:
                    cur = self._body(self.defn.phases[member])
                    self.link(prev.exits, cur, f"c:{member}")
                    prev = cur
                exits.extend(prev.exits)
            return _Fragment(entries=entries, exits=exits)
        raise ValueError(f"unknown phase kind {p.kind!r}")


def _indegree(defn: WorkflowDefinition) -> dict[str, int]:
    deg: Counter = Counter()
    deg[defn.root] += 1
    inner = defn.branch_members()
    for p in defn.phases.values():
        if p.name in inner:
            continue
        for target in p.successors():
            deg[target] += 1
    return dict(deg)


def build_net(defn: WorkflowDefinition, fanouts: Mapping[str, int] | None = None) -> WfdNet:
    """Instantiate the net of ``defn`` for concrete map/loop widths."""
    fanouts = fanouts or {}
    b = _Builder(defn, fanouts)
    compile_phase = b.compile

    b.place(START)
    c0 = b.trans("c0", COORDINATOR)
    b.arc(START, c0)
    b.link([c0], compile_phase(defn.root), f"c:{defn.root}")

    terminals = [n for n in defn.terminal_phases() if n in _reachable_top(defn)]
    end_frag = _Fragment(entry_place=b.place(END))
    inner = defn.branch_members()
    for name in list(_reachable_top(defn)):
        if name in inner:
            continue
        frag = compile_phase(name)
        p = defn.phases[name]
        if p.kind == "switch":
            continue
        if p.next is not None:
            b.link(frag.exits, compile_phase(p.next), f"c:{p.next}" if b.indegree.get(p.next, 0) <= 1 else f"c:{p.next}<{name}")
        elif frag.exits:
            cid = "c:end" if len(terminals) <= 1 else f"c:end<{name}"
            b.link(frag.exits, end_frag, cid)
        if p.on_error and frag.error_exit:
            b.link([frag.error_exit], compile_phase(p.on_error), f"c:{p.on_error}<{name}:err")

    # END last so the sink is the final place
    b.places.remove(END)
    b.places.append(END)

    reads, writes, destroys = {}, {}, {}
    for t in b.transitions.values():
        spec = defn.functions.get(t.function or "")
        if spec is not None:
            reads[t.id] = frozenset(spec.reads)
            writes[t.id] = frozenset(spec.writes)
            destroys[t.id] = frozenset(spec.destroys)
    return WfdNet(
        places=b.places,
        transitions=b.transitions,
        arcs=b.arcs,
        reads=reads,
        writes=writes,
        destroys=destroys,
        guards=b.guards,
        elided=b.elided,
    )


def _reachable_top(defn: WorkflowDefinition) -> list[str]:
    """Top-level phases reachable from root, in document order."""
    seen: set[str] = set()
    stack = [defn.root]
    while stack:
        n = stack.pop()
        if n in seen or n not in defn.phases:
            continue
        seen.add(n)
        stack.extend(defn.phases[n].successors())
    return [n for n in defn.phases if n in seen]


# ---------------------------------------------------------------------------
# structural checks

@dataclass
class StructuralReport:
    sources: list[str]
    sinks: list[str]
    disconnected: list[str]

    @property
    def unique_source(self) -> bool:
        return len(self.sources) == 1

    @property
    def unique_sink(self) -> bool:
        return len(self.sinks) == 1

    @property
    def connected(self) -> bool:
        return not self.disconnected

    @property
    def ok(self) -> bool:
        return self.unique_source and self.unique_sink and self.connected

    def lines(self) -> list[str]:
        out = []
        if not self.unique_source:
            out.append(f"source places {self.sources} (expected exactly one)")
        if not self.unique_sink:
            out.append(f"sink places {self.sinks} (expected exactly one)")
        if not self.connected:
            out.append(f"not on a source-to-sink path: {self.disconnected}")
        return out


def check_workflow_net(net: WfdNet) -> StructuralReport:
    incoming = {d for _, d in net.arcs}
    outgoing = {s for s, _ in net.arcs}
    sources = [p for p in net.places if p not in incoming]
    sinks = [p for p in net.places if p not in outgoing]

    def closure(seeds: Iterable[str], edges: dict[str, list[str]]) -> set[str]:
        seen = set(seeds)
        stack = list(seen)
        while stack:
            for nxt in edges.get(stack.pop(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    fwd = closure(sources[:1], net._post) if sources else set()
    bwd = closure(sinks[:1], net._pre) if sinks else set()
    nodes = list(net.places) + list(net.transitions)
    disconnected = [n for n in nodes if n not in fwd or n not in bwd]
    return StructuralReport(sources, sinks, disconnected)


# ---------------------------------------------------------------------------
# token game

@dataclass(frozen=True)
class FiringPolicy:
    """Resolves nondeterminism and data effects of the token game.

    Per step every enabled transition fires in id order. ``failures`` names
    task phases whose function fails, which drives on_error routing.
    """

    failures: frozenset[str] = frozenset()


@dataclass
class FiringSequence:
    fired: list[str]
    marking: dict[str, int]
    data: dict
    violations: list[str] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return self.marking == {END: 1}


class _Game:
    def __init__(self, net: WfdNet, data: Any):
        self.net = net
        self.marking: Counter = Counter({START: 1})
        self.data = data
        self.fired: list[str] = []
        self.destroyed: set[str] = set()
        self.violations: list[str] = []

    def enabled(self, t: str, check_guard: bool = True) -> bool:
        pre = self.net._pre.get(t, ())
        if not pre or any(self.marking[p] < 1 for p in pre):
            return False
        if check_guard and t in self.net.guards:
            try:
                return self.net.guards[t].evaluate(self.data)
            except KeyError as exc:
                raise GuardUnresolvable(f"guard of {t} needs {exc.args[0]!r}") from None
        return True

    def fire(self, t: str) -> None:
        for p in self.net._pre.get(t, ()):
            self.marking[p] -= 1
            if not self.marking[p]:
                del self.marking[p]
        for p in self.net._post.get(t, ()):
            self.marking[p] += 1
        bad = self.net.reads.get(t, frozenset()) & self.destroyed
        if bad:
            self.violations.append(f"{t} reads destroyed {sorted(bad)}")
        self.destroyed |= self.net.destroys.get(t, frozenset())
        self.fired.append(t)

    def result(self) -> FiringSequence:
        return FiringSequence(self.fired, dict(self.marking), self.data, self.violations)


def token_game(net: WfdNet, payload: Any = None, policy: FiringPolicy | None = None) -> FiringSequence:
    """Play the token game from one token on ``start`` until nothing is enabled."""
    policy = policy or FiringPolicy()
    data = dict(payload) if isinstance(payload, Mapping) else {"input": payload}
    data.setdefault("__failed__", {})
    game = _Game(net, data)
    order = sorted(net.transitions)
    while True:
        step = [t for t in order if game.enabled(t)]
        if not step:
            break
        for t in step:
            if not game.enabled(t):
                continue
            game.fire(t)
            tr = net.transitions[t]
            if tr.kind == FUNCTION and tr.phase is not None:
                game.data["__failed__"][tr.phase] = int(tr.phase in policy.failures)
    seq = game.result()
    if END not in seq.marking:
        raise Deadlock(f"no enabled transition, marking {seq.marking}", seq)
    return seq


def replay(
    net: WfdNet,
    functions: Sequence[str],
    routes: Iterable[str] = (),
) -> FiringSequence:
    """Check that ``functions`` (in execution order) is a firing sequence of ``net``.

    Coordinators are fired greedily as needed; guarded routing transitions
    fire only if listed in ``routes`` (the decisions taken at run time).
    """
    routes = set(routes)
    game = _Game(net, {})
    order = sorted(net.transitions)
    free = [t for t in order if net.transitions[t].kind == COORDINATOR]

    def allowed(t: str) -> bool:
        return t not in net.guards or t in routes

    def advance() -> bool:
        for t in free:
            if allowed(t) and game.enabled(t, check_guard=False):
                game.fire(t)
                return True
        return False

    for f in functions:
        if f not in net.transitions or net.transitions[f].kind != FUNCTION:
            raise ReplayError(f"{f} is not a function transition of the net")
        while not game.enabled(f, check_guard=False):
            if not advance():
                raise ReplayError(f"{f} never becomes enabled (marking {dict(game.marking)})")
        game.fire(f)
    while advance():
        pass
    seq = game.result()
    if not seq.complete:
        raise ReplayError(f"run does not complete; final marking {seq.marking}")
    return seq
