"""Deterministic discrete-event execution of workflow instantiations.

Orchestrators are generators that yield commands (sleep, wait for a
function call, fork children) to a single-threaded
event loop over integer microseconds. Function calls go through a shared
container pool with an optional cap and a FIFO wait queue ordered by
(enqueue time, invocation, request sequence).

Platform shapes only differ in where orchestration overhead is charged:

* ``generic`` -- once at ``c0`` and at every coordinator the net keeps
* ``aws``/``google`` -- once per billed state transition, at the point
  where the state or step executes
* ``azure`` -- once per orchestrator replay: start, each phase boundary, end
"""

from __future__ import annotations

import heapq
import json
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable, Generator, Iterable, Mapping, Sequence

import numpy as np

from ..definition import Phase, WorkflowDefinition, get_path
from ..net import _indegree, boundary_coordinators
from .model import PlatformModel
from .stores import KeyValueStore, ObjectStore, StoredObject
from .trace import CoordinatorEvent, ExecutionTrace, FunctionEvent


class KernelError(Exception):
    """Raised by a kernel to make its function execution fail."""


class FunctionFailed(Exception):
    def __init__(self, node: str, message: str):
        super().__init__(f"{node}: {message}")
        self.node = node


class CompensationFailure(RuntimeError):
    """A function on a failure-handler path failed itself."""


class MissingKernel(KeyError):
    pass


class NoMatchingCase(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelResult:
    output: Any
    duration_us: int
    output_bytes: int | None = None


Kernel = Callable[[Any, "KernelContext"], Any]


def payload_size(payload: Any) -> int:
    return len(json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str).encode())


# ---------------------------------------------------------------------------
# kernel context


class _Objects:
    def __init__(self, ctx: "KernelContext", store: ObjectStore):
        self._ctx = ctx
        self._store = store

    def get(self, key: str) -> StoredObject:
        obj = self._store.get(key)
        self._ctx.io_us += self._ctx.model.storage_us(obj.size)
        self._ctx.bytes_read += obj.size
        return obj

    def put(self, key: str, size: int, data: bytes | None = None) -> StoredObject:
        obj = self._store.put(key, size, data)
        self._ctx.io_us += self._ctx.model.storage_us(size)
        self._ctx.bytes_written += size
        return obj

    def __contains__(self, key: str) -> bool:
        return key in self._store


class _KV:
    def __init__(self, store: KeyValueStore, invocation: str):
        self._store = store
        self._inv = invocation

    def create(self, table: str, pk: Any, item: dict, sk: Any = None) -> None:
        self._store.create(table, pk, item, sk, invocation=self._inv)

    def modify(self, table: str, pk: Any, changes: dict, sk: Any = None) -> dict:
        return self._store.modify(table, pk, changes, sk, invocation=self._inv)

    def retrieve(self, table: str, pk: Any, sk: Any = None) -> dict | None:
        return self._store.retrieve(table, pk, sk, invocation=self._inv)

    def delete(self, table: str, pk: Any, sk: Any = None) -> None:
        self._store.delete(table, pk, sk, invocation=self._inv)


@dataclass
class KernelContext:
    invocation: str
    node: str
    function: str
    phase: str
    rng: np.random.Generator
    suspension_share: float
    model: PlatformModel
    memory_mb: int
    kv: Any = None
    objects: Any = None
    io_us: int = 0
    bytes_read: int = 0
    bytes_written: int = 0


# ---------------------------------------------------------------------------
# event loop


@dataclass
class Sleep:
    us: int


@dataclass
class Fork:
    children: list[Callable[[], Generator]]
    limit: int | None = None


Done = Callable[[Any, BaseException | None], None]


class EventLoop:
    def __init__(self) -> None:
        self.now = 0
        self._heap: list = []
        self._seq = 0

    def at(self, t: int, fn: Callable[[], None]) -> None:
        heapq.heappush(self._heap, (t, self._seq, fn))
        self._seq += 1

    def run(self) -> None:
        while self._heap:
            t, _, fn = heapq.heappop(self._heap)
            self.now = t
            fn()


# ---------------------------------------------------------------------------
# container pool


@dataclass
class Container:
    id: str
    function: str


@dataclass
class _Request:
    key: tuple
    function: str
    grant: Callable[[Container, bool], None]

    def __lt__(self, other: "_Request") -> bool:
        return self.key < other.key


class ContainerPool:
    """Containers per function; ``cap`` bounds live containers of the whole pool."""

    def __init__(self, cap: int | None):
        self.cap = cap
        self.live = 0
        self._created = 0
        self._idle: dict[str, list[Container]] = {}
        self._queue: list[_Request] = []

    def _new(self, function: str) -> Container:
        self._created += 1
        self.live += 1
        return Container(f"ctr-{self._created:05d}", function)

    def _evict_idle(self) -> bool:
        # oldest container among idle ones, deterministic by id
        candidates = [(c.id, f) for f, cs in self._idle.items() for c in cs]
        if not candidates:
            return False
        cid, func = min(candidates)
        self._idle[func] = [c for c in self._idle[func] if c.id != cid]
        self.live -= 1
        return True

    def acquire(self, req: _Request) -> None:
        idle = self._idle.get(req.function)
        if idle:
            req.grant(idle.pop(), False)
        elif self.cap is None or self.live < self.cap:
            req.grant(self._new(req.function), True)
        elif self._evict_idle():
            req.grant(self._new(req.function), True)
        else:
            heapq.heappush(self._queue, req)

    def release(self, ctr: Container) -> None:
        if self._queue:
            req = heapq.heappop(self._queue)
            if req.function == ctr.function:
                req.grant(ctr, False)
            else:
                self.live -= 1
                req.grant(self._new(req.function), True)
        else:
            self._idle.setdefault(ctr.function, []).append(ctr)

    @property
    def waiting(self) -> int:
        return len(self._queue)


# ---------------------------------------------------------------------------
# simulator

# Transitions charged at each construct by the state-machine shapes.
POINT_CHARGES: dict[str, dict[str, tuple[int, int]]] = {
    "aws": {
        "start": (1, 0), "end": (1, 0), "task_call": (0, 1), "item_call": (0, 1),
        "map_entry": (1, 0), "map_element": (0, 0), "map_exit": (0, 0),
        "loop_entry": (1, 0), "switch": (1, 0), "parallel": (1, 0),
    },
    "google": {
        "start": (1, 0), "end": (1, 0), "task_call": (1, 1), "item_call": (1, 1),
        "map_entry": (3, 0), "map_element": (3, 0), "map_exit": (1, 0),
        "loop_entry": (1, 0), "switch": (1, 0), "parallel": (1, 0),
    },
}


@dataclass
class _Invocation:
    id: str
    defn: WorkflowDefinition
    payload: Any
    trace: ExecutionTrace
    indegree: dict[str, int] = field(default_factory=dict)


class Simulator:
    """A platform instance: one event loop, one container pool, shared stores.

    The pool persists across ``run``/``run_burst`` calls, so later
    invocations can reuse warm containers.
    """

    def __init__(
        self,
        model: PlatformModel,
        kernels: Mapping[str, Kernel],
        seed: int = 0,
        memory_mb: int | None = None,
        kv: KeyValueStore | None = None,
        objects: ObjectStore | None = None,
    ):
        self.model = model
        self.kernels = dict(kernels)
        self.seed = int(seed)
        self.memory_mb = memory_mb or model.memory_mb
        self.kv = kv if kv is not None else KeyValueStore()
        self.objects = objects if objects is not None else ObjectStore()
        self.loop = EventLoop()
        self.pool = ContainerPool(None)
        self._cold_rng = np.random.default_rng([self.seed, 0x5EED])
        self._requests = 0
        self._invocations = 0

    # -- public API ---------------------------------------------------------

    def run(self, defn: WorkflowDefinition, payload: Any, invocation: str | None = None) -> ExecutionTrace:
        ids = [invocation] if invocation else None
        return self.run_burst(defn, [payload], 1, ids=ids)[0]

    def run_burst(
        self,
        defn: WorkflowDefinition,
        inputs: Sequence[Any],
        burst_size: int | None = None,
        ids: Sequence[str] | None = None,
    ) -> list[ExecutionTrace]:
        """Submit ``burst_size`` invocations at the current virtual time.

        Inputs are cycled if fewer than ``burst_size`` are given.
        """
        if not inputs:
            raise ValueError("at least one input is required")
        burst_size = burst_size or len(inputs)
        if burst_size < 1:
            raise ValueError("burst_size must be >= 1")
        self._check_kernels(defn)
        self.pool.cap = self.model.cap_for(burst_size, _peak_fanout(defn, inputs[0]))

        indeg = _indegree(defn)
        invs = []
        for k in range(burst_size):
            self._invocations += 1
            inv_id = ids[k] if ids else f"{defn.name}-{self._invocations:05d}"
            trace = ExecutionTrace(
                invocation=inv_id,
                workflow=defn.name,
                model=self.model.name,
                shape=self.model.shape,
                submitted=self.loop.now,
                memory_mb=self.memory_mb,
            )
            inv = _Invocation(inv_id, defn, inputs[k % len(inputs)], trace, indeg)
            invs.append(inv)
            self._spawn(self._workflow(inv), self._finisher(inv))
        log_start = len(self.kv.log)
        self.loop.run()
        for inv in invs:
            t = inv.trace
            t.events.sort(key=lambda e: (e.start, e.node))
            t.coordinators.sort(key=lambda c: (c.start, c.node))
            t.kv_ops = [op.to_dict() for op in self.kv.log[log_start:] if op.invocation == inv.id]
        return [inv.trace for inv in invs]

    # -- processes ----------------------------------------------------------

    def _check_kernels(self, defn: WorkflowDefinition) -> None:
        missing = [f for f in defn.function_names() if self._kernel_name(defn, f) not in self.kernels]
        if missing:
            raise MissingKernel(f"no kernel for function(s) {missing}")

    @staticmethod
    def _kernel_name(defn: WorkflowDefinition, func: str) -> str:
        spec = defn.functions.get(func)
        return spec.binding if spec is not None and spec.binding else func

    def _finisher(self, inv: _Invocation) -> Done:
        def done(value: Any, err: BaseException | None) -> None:
            if err is None:
                inv.trace.output = value
            else:
                inv.trace.status = "failed"
                inv.trace.error = str(err)

        return done

    def _spawn(self, gen: Generator, done: Done) -> None:
        self.loop.at(self.loop.now, lambda: self._step(gen, done, None, None))

    def _resume(self, gen: Generator, done: Done, value: Any = None, err: BaseException | None = None) -> None:
        self.loop.at(self.loop.now, lambda: self._step(gen, done, value, err))

    def _step(self, gen: Generator, done: Done, value: Any, err: BaseException | None) -> None:
        try:
            cmd = gen.throw(err) if err is not None else gen.send(value)
        except StopIteration as stop:
            done(stop.value, None)
            return
        except (FunctionFailed, NoMatchingCase) as exc:
            done(None, exc)
            return
        loop = self.loop
        if isinstance(cmd, Sleep):
            loop.at(loop.now + cmd.us, lambda: self._step(gen, done, None, None))
        elif isinstance(cmd, Fork):
            self._fork(cmd, lambda v, e: self._resume(gen, done, v, e))
        elif isinstance(cmd, _Wait):
            cmd.start(lambda v, e: self._resume(gen, done, v, e))
        else:  # pragma: no cover
            raise TypeError(f"unknown command {cmd!r}")

    def _fork(self, cmd: Fork, done: Done) -> None:
        n = len(cmd.children)
        if n == 0:
            self._resume_plain(done, [])
            return
        results: list[Any] = [None] * n
        state = {"next": 0, "active": 0, "finished": 0, "error": None}
        limit = cmd.limit or n

        def start_next() -> None:
            i = state["next"]
            state["next"] += 1
            state["active"] += 1
            self._spawn(cmd.children[i](), lambda v, e, i=i: child_done(i, v, e))

        def child_done(i: int, value: Any, err: BaseException | None) -> None:
            results[i] = value
            if err is not None and state["error"] is None:
                state["error"] = err
            state["active"] -= 1
            state["finished"] += 1
            if state["next"] < n:
                start_next()
            elif state["finished"] == n:
                done(None, state["error"]) if state["error"] else done(results, None)

        for _ in range(min(limit, n)):
            start_next()

    def _resume_plain(self, done: Done, value: Any) -> None:
        self.loop.at(self.loop.now, lambda: done(value, None))

    # -- commands built on waits -------------------------------------------

    def _charge(self, inv: _Invocation, node: str, internal: int, external: int, units: int) -> Generator:
        """Record an orchestration step and spend its overhead."""
        start = self.loop.now
        dur = units * self.model.overhead_us
        inv.trace.coordinators.append(CoordinatorEvent(inv.id, node, start, start + dur, internal, external))
        if dur:
            yield Sleep(dur)

    def _point(self, inv: _Invocation, what: str, node: str) -> Generator:
        table = POINT_CHARGES.get(self.model.shape)
        if table is None:
            return
        internal, external = table[what]
        if internal or external:
            yield from self._charge(inv, node, internal, external, internal + external)

    def _call(self, inv: _Invocation, node: str, phase: str, func: str, payload: Any, path: tuple) -> Generator:
        """Execute one function; returns its output or raises FunctionFailed."""
        result = yield _Wait(lambda done: self._invoke(inv, node, phase, func, payload, path, done))
        return result

    def _invoke(
        self, inv: _Invocation, node: str, phase: str, func: str, payload: Any, path: tuple, done: Done
    ) -> None:
        loop, model = self.loop, self.model
        self._requests += 1
        key = (loop.now, inv.id, self._requests)

        def granted(ctr: Container, cold: bool) -> None:
            acquired = loop.now
            startup = model.cold_start.sample_us(self._cold_rng) if cold else model.warm_us
            loop.at(acquired + startup, lambda: started(ctr, cold, acquired))

        def started(ctr: Container, cold: bool, acquired: int) -> None:
            start = loop.now
            rng = np.random.default_rng([self.seed, zlib.crc32(inv.id.encode()), zlib.crc32(node.encode())])
            share = model.share(self.memory_mb)
            ctx = KernelContext(inv.id, node, func, phase, rng, share, model, self.memory_mb)
            ctx.kv = _KV(self.kv, inv.id)
            ctx.objects = _Objects(ctx, self.objects)
            kernel = self.kernels[self._kernel_name(inv.defn, func)]
            failed, message = False, ""
            try:
                raw = kernel(payload, ctx)
                res = raw if isinstance(raw, KernelResult) else KernelResult(*raw)
                output, compute = res.output, int(res.duration_us)
                out_bytes = res.output_bytes if res.output_bytes is not None else payload_size(output)
            except KernelError as exc:
                failed, message = True, str(exc) or type(exc).__name__
                output, compute, out_bytes = None, 0, 0
            if compute < 0:
                raise ValueError(f"kernel for {func!r} reported negative duration")
            wall = int(round(compute / (1.0 - share))) + ctx.io_us
            end = start + wall
            event = FunctionEvent(
                invocation=inv.id,
                node=node,
                function=func,
                phase=phase,
                path=path,
                acquired=acquired,
                start=start,
                end=end,
                container=ctr.id,
                cold=cold,
                payload_in=payload_size(payload),
                payload_out=out_bytes,
                failed=failed,
                bytes_read=ctx.bytes_read,
                bytes_written=ctx.bytes_written,
            )

            def finished() -> None:
                self.pool.release(ctr)
                inv.trace.events.append(event)
                delay = 0
                limit = model.payload_channel_threshold_bytes
                if not failed and limit is not None and out_bytes > limit:
                    # return payload detours through object storage: write then read
                    delay = 2 * model.storage_us(out_bytes)
                if failed:
                    loop.at(loop.now + delay, lambda: done(None, FunctionFailed(node, message)))
                else:
                    loop.at(loop.now + delay, lambda: done(output, None))

            loop.at(end, finished)

        self.pool.acquire(_Request(key, func, granted))

    # -- orchestration ------------------------------------------------------

    def _workflow(self, inv: _Invocation) -> Generator:
        defn, shape = inv.defn, self.model.shape
        trace = inv.trace
        if shape in POINT_CHARGES:
            yield from self._point(inv, "start", "c0")
        else:
            yield from self._charge(inv, "c0", 1, 0, 1)
        payload = inv.payload
        name: str | None = defn.root
        stage, prev_exits, work_phases = 0, 1, 0
        compensating = False
        while name is not None:
            p = defn.phases[name]
            if p.kind == "switch":
                if shape == "generic" and prev_exits > 1:
                    yield from self._charge(inv, f"c:{name}", 1, 0, 1)
                yield from self._point(inv, "switch", f"s:{name}")
                route, target = _route(p, payload)
                trace.decisions.append(route)
                name, prev_exits = target, 1
                continue
            if shape == "generic":
                n = boundary_coordinators(prev_exits, _entries(defn, p, payload), inv.indegree.get(name, 0) > 1)
                if n:
                    yield from self._charge(inv, f"c:{name}", n, 0, n)
            elif shape == "azure" and work_phases:
                yield from self._charge(inv, f"c:{name}", 1, 0, 1)
            work_phases += 1
            try:
                payload_out, exits = yield from self._phase(inv, p, payload, (), stage)
            except FunctionFailed as failure:
                if compensating:
                    raise CompensationFailure(f"compensation step failed: {failure}") from None
                if p.on_error is None:
                    raise
                trace.decisions.append(f"g:{name}:err")
                compensating = True
                stage += 1
                name, prev_exits = p.on_error, 1
                continue
            if p.on_error:
                trace.decisions.append(f"g:{name}:ok")
            payload = payload_out
            stage += 1
            name, prev_exits = p.next, exits
        if shape in POINT_CHARGES:
            yield from self._point(inv, "end", "c:end")
        elif shape == "azure":
            yield from self._charge(inv, "c:end", 1, 0, 1)
        elif prev_exits > 1:
            yield from self._charge(inv, "c:end", 1, 0, 1)
        return payload

    def _phase(self, inv: _Invocation, p: Phase, payload: Any, prefix: tuple, stage: int) -> Generator:
        """Run one phase; returns (output payload, number of exit transitions)."""
        name = p.name
        trace = inv.trace
        if p.kind == "task":
            node = f"f:{name}"
            yield from self._point(inv, "task_call", f"s:{name}")
            out = yield from self._call(inv, node, name, p.func[0], payload, prefix + (stage, 0))
            return out, 1
        if p.kind in ("map", "loop"):
            items = _array(p, payload)
            trace.fanouts[name] = len(items)
            common = get_path(payload, p.common_parameters) if p.common_parameters else None

            def arg(x: Any) -> Any:
                return {"item": x, "common": common} if p.common_parameters else x

            if p.kind == "loop":
                yield from self._point(inv, "loop_entry", f"s:{name}")
                outs = []
                for i, x in enumerate(items):
                    yield from self._point(inv, "item_call", f"s:{name}[{i}]")
                    outs.append((yield from self._call(inv, f"f:{name}[{i}]", name, p.func[0], arg(x), prefix + (stage, 0, i, 0))))
                return outs, 1

            k = p.chain_length

            def element(i: int) -> Generator:
                yield from self._point(inv, "map_element", f"s:{name}[{i}]")
                x = arg(items[i])
                for j, func in enumerate(p.func):
                    node = f"f:{name}[{i}]" if k == 1 else f"f:{name}[{i}].{j}"
                    yield from self._point(inv, "item_call", f"s:{node[2:]}")
                    x = yield from self._call(inv, node, name, func, x, prefix + (stage, i, j, 0))
                return x

            yield from self._point(inv, "map_entry", f"s:{name}")
            outs = yield Fork([lambda i=i: element(i) for i in range(len(items))], self.model.max_parallelism)
            yield from self._point(inv, "map_exit", f"s:{name}:collect")
            return outs, len(items)
        if p.kind == "repeat":
            x = payload
            for i in range(p.count or 0):
                yield from self._point(inv, "item_call", f"s:{name}#{i}")
                x = yield from self._call(inv, f"f:{name}#{i}", name, p.func[0], x, prefix + (stage, 0, i, 0))
            return x, 1
        if p.kind == "parallel":
            yield from self._point(inv, "parallel", f"s:{name}")

            def branch(b: int, members: tuple[str, ...]) -> Generator:
                x, exits = payload, 1
                for m_idx, member in enumerate(members):
                    mp = inv.defn.phases[member]
                    if m_idx and self.model.shape == "generic":
                        n = boundary_coordinators(exits, _entries(inv.defn, mp, x), False)
                        if n:
                            yield from self._charge(inv, f"c:{member}", n, 0, n)
                    x, exits = yield from self._phase(inv, mp, x, prefix + (stage, b), m_idx)
                return x, exits

            results = yield Fork([lambda b=b, br=br: branch(b, br) for b, br in enumerate(p.branches)], None)
            return [r[0] for r in results], sum(r[1] for r in results)
        raise ValueError(f"phase kind {p.kind!r} cannot run here")  # pragma: no cover


@dataclass
class _Wait:
    """Suspend the process until ``start``'s callback fires."""

    start: Callable[[Done], None]


def _array(p: Phase, payload: Any) -> list:
    items = get_path(payload, p.array or "")
    if not isinstance(items, list):
        raise TypeError(f"phase {p.name!r}: {p.array!r} is not an array")
    if not items:
        raise ValueError(f"phase {p.name!r}: array {p.array!r} is empty")
    return items


def _entries(defn: WorkflowDefinition, p: Phase, payload: Any) -> int:
    """Number of entry transitions of a phase for the given input."""
    if p.kind == "map":
        return len(_array(p, payload))
    if p.kind == "parallel":
        return sum(_entries(defn, defn.phases[b[0]], payload) for b in p.branches)
    return 1


def _route(p: Phase, payload: Any) -> tuple[str, str]:
    for i, case in enumerate(p.cases):
        if case.guard is not None and case.guard.evaluate(payload):
            return f"g:{p.name}:{i}", case.next  # type: ignore[return-value]
    if p.default is None:
        raise NoMatchingCase(f"no case of switch {p.name!r} matched and there is no default")
    return f"g:{p.name}:default", p.default


def _peak_fanout(defn: WorkflowDefinition, payload: Any) -> int:
    peak = 1
    for p in defn.phases.values():
        if p.kind == "map" and p.array:
            try:
                items = get_path(payload, p.array)
            except (KeyError, IndexError, TypeError):
                continue
            if isinstance(items, list):
                peak = max(peak, len(items))
        if p.kind == "parallel":
            peak = max(peak, len(p.branches))
    return peak


# ---------------------------------------------------------------------------
# module-level entry points (fresh pool at virtual time 0)


def run(
    defn: WorkflowDefinition,
    payload: Any,
    model: PlatformModel,
    kernels: Mapping[str, Kernel],
    seed: int = 0,
    **kwargs: Any,
) -> ExecutionTrace:
    return Simulator(model, kernels, seed, **kwargs).run(defn, payload)


def run_burst(
    defn: WorkflowDefinition,
    inputs: Iterable[Any],
    model: PlatformModel,
    kernels: Mapping[str, Kernel],
    burst_size: int,
    seed: int = 0,
    **kwargs: Any,
) -> list[ExecutionTrace]:
    return Simulator(model, kernels, seed, **kwargs).run_burst(defn, list(inputs), burst_size)
