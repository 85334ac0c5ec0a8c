"""Fork/join runtime with lazy work stealing over hierarchical heaps.

``fork_join(f, g)`` pushes a stealable descriptor for ``g``, opens a child
heap on the caller's superheap and runs ``f`` there. If nobody stole ``g``
it is popped and run inline in the same child heap; otherwise the thief
gave it a fresh sibling heap and a superheap of its own, and the caller
helps with other work until the thief is done. Both child heaps are then
joined into the caller's heap.

Workers are OS threads; the calling thread is worker 0. In deterministic
mode exactly one worker runs at a time and a seeded generator decides who
runs next at every scheduling point, which makes steal decisions replayable.
"""

from __future__ import annotations

import enum
import itertools
import logging
import random
import sys
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable

from . import context
from .audit import AuditReport, audit_all
from .collector import Cell, Collector, RootSet
from .errors import ContractViolation
from .heaps import HeapHierarchy, Superheap
from .memops import HookedMemOps, MemOps
from .objects import DEFAULT_MAX_CHUNK, DEFAULT_MIN_CHUNK, SCALAR_MUT, ObjectLayout, ObjectStore, ObjRef
from .stats import Stats, StatsReport
from .trace import Tracer, heap_subject

log = logging.getLogger("hierheap")

AUDIT_MODES = ("off", "joins", "every-op")
DEFAULT_GC_THRESHOLD = 64 * DEFAULT_MIN_CHUNK

# scheduler join record kept in the global heap: [countdown, thief]
JOIN_LAYOUT = ObjectLayout.array(2, SCALAR_MUT)


@dataclass
class RuntimeConfig:
    workers: int = 1
    seed: int = 0
    deterministic: bool = False
    # bytes; None disables automatic collection
    gc_threshold: int | None = DEFAULT_GC_THRESHOLD
    audit: str = "off"
    # deterministic mode only: chance of a scheduling point at each memop
    preempt: float = 0.0
    trace: bool = False
    debug: bool = True
    min_chunk: int = DEFAULT_MIN_CHUNK
    max_chunk: int = DEFAULT_MAX_CHUNK

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.audit not in AUDIT_MODES:
            raise ValueError(f"audit must be one of {AUDIT_MODES}")
        if not 0.0 <= self.preempt <= 1.0:
            raise ValueError("preempt must be a probability")


class TaskState(enum.Enum):
    READY = "ready"
    RUNNING = "running"
    SUSPENDED = "suspended"
    DONE = "done"


class Task:
    __slots__ = ("id", "heap", "parent", "superheap", "state")

    def __init__(self, tid: int, heap: int, parent: Task | None, superheap: Superheap):
        self.id = tid
        self.heap = heap
        self.parent = parent
        self.superheap = superheap
        self.state = TaskState.READY

    def __repr__(self) -> str:
        return f"Task({self.id}, heap={self.heap}, {self.state.value})"


class JoinRecord:
    """The stealable half of one fork_join and, once stolen, its completion state."""

    __slots__ = (
        "id", "thunk", "parent", "heap", "superheap", "stolen", "thief", "done",
        "event", "result", "exc", "child_heap", "record",
    )

    def __init__(self, jid: int, thunk: Callable[[], Any], parent: Task, heap: int, sh: Superheap):
        self.id = jid
        self.thunk = thunk
        self.parent = parent
        self.heap = heap
        self.superheap = sh
        self.stolen = False
        self.thief = -1
        self.done = False
        self.event: threading.Event | None = None
        self.result: Any = None
        self.exc: BaseException | None = None
        self.child_heap: int | None = None
        self.record: ObjRef | None = None


class Worker:
    __slots__ = ("id", "deque", "lock", "rng", "executed")

    def __init__(self, wid: int, seed: int):
        self.id = wid
        self.deque: deque[JoinRecord] = deque()
        self.lock = threading.Lock()
        self.rng = random.Random(seed * 7919 + wid)
        self.executed = 0


class _Slot(Cell):
    __slots__ = ()


def _extract(v: Any, cells: list[Cell]) -> Any:
    if type(v) is ObjRef:
        c = _Slot(v)
        cells.append(c)
        return c
    if isinstance(v, tuple) and type(v) is not ObjRef:
        return tuple(_extract(x, cells) for x in v)
    if isinstance(v, list):
        return [_extract(x, cells) for x in v]
    return v


def _rebuild(v: Any) -> Any:
    if type(v) is _Slot:
        return v.value
    if isinstance(v, tuple):
        return tuple(_rebuild(x) for x in v)
    if isinstance(v, list):
        return [_rebuild(x) for x in v]
    return v


class Runtime:
    def __init__(self, config: RuntimeConfig | None = None, **kw: Any):
        cfg = config if config is not None else RuntimeConfig(**kw)
        self.config = cfg
        self.store = ObjectStore(min_chunk=cfg.min_chunk, max_chunk=cfg.max_chunk, debug=cfg.debug)
        self.hierarchy = HeapHierarchy(self.store)
        self.global_heap = self.hierarchy.new_global_heap()
        self.stats = Stats()
        self.tracer = Tracer() if cfg.trace else None
        self.roots = RootSet()
        self.collector = Collector(self.hierarchy, self.roots, self.stats, self.tracer)

        self._gate = threading.RLock() if cfg.audit == "every-op" else None
        hooked = self._gate is not None or (cfg.deterministic and cfg.preempt > 0)
        if hooked:
            self.memops: MemOps = HookedMemOps(self.hierarchy, self.stats, self.tracer, hook=self)
        else:
            self.memops = MemOps(self.hierarchy, self.stats, self.tracer)
        self.memops.gc_threshold = cfg.gc_threshold

        m = self.memops
        self.alloc = m.alloc
        self.read_immutable = m.read_immutable
        self.read_mutable = m.read_mutable
        self.write_nonptr = m.write_nonptr
        self.write_ptr = m.write_ptr
        self.compare_and_swap = m.compare_and_swap

        self._ids = itertools.count()
        self._workers: list[Worker] = []
        self._finished = False
        self._idle = 0
        self._idle_cond = threading.Condition()
        self._global_lock = threading.Lock()
        # deterministic baton
        self._turn = 0
        self._turn_cond = threading.Condition()
        self._brng = random.Random(cfg.seed)
        self._preempt_rng = random.Random(cfg.seed ^ 0x5EED)

        self.steal_log: list[tuple[int, int, int]] = []
        self.audits = 0
        self.audit_failures: list[AuditReport] = []
        self.wall_time = 0.0
        self.root_task: Task | None = None
        self._thread_errors: list[BaseException] = []

    # -- public queries ---------------------------------------------------------------

    @staticmethod
    def current_task() -> Task:
        t = context.current_task()
        if t is None:
            raise ContractViolation("no task is running on this thread")
        return t

    @staticmethod
    def heap_of_task(task: Task) -> int:
        return task.heap

    @property
    def workers(self) -> int:
        return self.config.workers

    @property
    def tasks_executed(self) -> int:
        return sum(w.executed for w in self._workers)

    @property
    def audit_passed(self) -> bool:
        return not self.audit_failures

    def register_root(self, cell: Cell) -> int:
        return self.roots.register_root(context.current_task(), cell)

    def unregister_root(self, rid: int) -> None:
        self.roots.unregister_root(rid)

    # -- memop hook (every-op audits, deterministic preemption) --------------------------

    def before(self) -> None:
        if self.config.deterministic and self.config.preempt > 0:
            if self._preempt_rng.random() < self.config.preempt:
                self._yield()
        if self._gate is not None:
            self._gate.acquire()

    def after(self) -> None:
        if self._gate is not None:
            try:
                self._audit(None)
            finally:
                self._gate.release()

    # -- auditing ----------------------------------------------------------------------

    def _audit(self, scope: list[int] | None) -> AuditReport:
        rep = audit_all(self.hierarchy, scope)
        self.audits += 1
        if not rep.passed:
            log.error("audit failed: %s", rep.summary())
            self.audit_failures.append(rep)
        return rep

    def audit(self) -> AuditReport:
        """Full audit of the whole store; call only while nothing runs."""
        return self._audit(None)

    # -- deterministic scheduling ------------------------------------------------------

    def _yield(self) -> None:
        if not self.config.deterministic:
            return
        me = context.current_worker()
        cond = self._turn_cond
        with cond:
            if self._finished:
                return
            self._turn = self._brng.randrange(len(self._workers))
            cond.notify_all()
            while self._turn != me and not self._finished:
                cond.wait()

    def _await_turn(self, me: int) -> None:
        with self._turn_cond:
            while self._turn != me and not self._finished:
                self._turn_cond.wait()

    # -- running -----------------------------------------------------------------------

    def run(self, fn: Callable[..., Any], *args: Any) -> Any:
        """Run ``fn(*args)`` as the root task and return its result."""
        cfg = self.config
        hier = self.hierarchy
        self._workers = [Worker(i, cfg.seed) for i in range(cfg.workers)]
        self._finished = False
        self._turn = 0
        root = Task(next(self._ids), hier.root, None, Superheap(0, 0, hier.root))
        self.root_task = root
        threads = [
            threading.Thread(target=self._worker_loop, args=(w,), name=f"hh-worker-{w.id}", daemon=True)
            for w in self._workers[1:]
        ]
        prev_worker = context.current_worker()
        context.set_worker(0)
        old_limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old_limit, 20000))
        for t in threads:
            t.start()
        t0 = time.perf_counter()
        try:
            res, exc, _ = self._run_task(root, lambda: fn(*args), [])
        finally:
            self.wall_time = time.perf_counter() - t0
            with self._turn_cond:
                self._finished = True
                self._turn_cond.notify_all()
            with self._idle_cond:
                self._idle_cond.notify_all()
            for t in threads:
                t.join()
            context.set_worker(prev_worker)
            sys.setrecursionlimit(old_limit)
        self.stats.sample_occupancy(self.store.live_bytes())
        if cfg.audit != "off":
            self._audit(None)
        if exc is not None:
            raise exc
        if self._thread_errors:
            raise self._thread_errors[0]
        return res

    def _worker_loop(self, w: Worker) -> None:
        context.set_worker(w.id)
        det = self.config.deterministic
        try:
            if det:
                self._await_turn(w.id)
            while not self._finished:
                jr = self._try_steal(w)
                if jr is not None:
                    self._run_stolen(w, jr)
                elif det:
                    self._yield()
                else:
                    with self._idle_cond:
                        if self._finished:
                            break
                        self._idle += 1
                        self._idle_cond.wait(0.005)
                        self._idle -= 1
        except BaseException as e:  # pragma: no cover - surfaced by run()
            log.exception("worker %d crashed", w.id)
            self._thread_errors.append(e)
            with self._turn_cond:
                self._finished = True
                self._turn_cond.notify_all()

    def _run_task(self, task: Task, thunk: Callable[[], Any], keep: list[Any]):
        heaps = self.hierarchy._heaps
        heap = heaps[task.heap]
        heap.pins += 1
        task.state = TaskState.RUNNING
        prev = context.swap_task(task)
        exc = None
        try:
            res = thunk()
        except BaseException as e:
            res, exc = None, e
        finally:
            context.swap_task(prev)
            heap.pins -= 1
            task.state = TaskState.DONE
        wid = context.current_worker()
        if 0 <= wid < len(self._workers):
            self._workers[wid].executed += 1
        if exc is None and heap.gc_requested and self._collectable(heap):
            res, keep = self._safepoint_collect(task.heap, res, keep)
        return res, exc, keep

    def _collectable(self, heap) -> bool:
        return heap.id != self.hierarchy.root and not heap.children and heap.pins == 0

    def _safepoint_collect(self, h: int, res: Any, keep: list[Any]):
        cells: list[Cell] = []
        packed = _extract([res, keep], cells)
        self.stats.sample_occupancy(self.store.live_bytes())
        if self._gate is not None:
            with self._gate:
                self.collector.collect(h, extra=cells)
        else:
            self.collector.collect(h, extra=cells)
        heap = self.hierarchy._heaps[h]
        heap.gc_floor = 2 * self.store._spaces[h].occupancy
        log.debug("collected heap %d", h)
        res, keep = _rebuild(packed)
        return res, keep

    # -- fork/join ---------------------------------------------------------------------

    def fork_join(self, f: Callable[[], Any], g: Callable[[], Any]) -> tuple[Any, Any]:
        task = context.current_task()
        if not isinstance(task, Task):
            raise ContractViolation("fork_join outside of a runtime task")
        hier = self.hierarchy
        heaps = hier._heaps
        w = self._workers[context.current_worker()]
        P = task.heap
        sh = task.superheap
        H = hier.new_child_heap(P)
        sh.push(heaps[H].depth, H)
        jr = JoinRecord(next(self._ids), g, task, P, sh)
        with w.lock:
            w.deque.append(jr)
        if self.tracer is not None:
            self.tracer.emit("fork", heap_subject(H))
        parent_heap = heaps[P]
        parent_heap.pins -= 1
        task.state = TaskState.SUSPENDED
        if self.config.deterministic:
            self._yield()
        elif self._idle:
            with self._idle_cond:
                self._idle_cond.notify()

        ftask = Task(next(self._ids), H, task, sh)
        fres, fexc, _ = self._run_task(ftask, f, [])

        with w.lock:
            popped = bool(w.deque) and w.deque[-1] is jr
            if popped:
                w.deque.pop()
        if popped:
            gtask = Task(next(self._ids), H, task, sh)
            gres, gexc, kept = self._run_task(gtask, g, [fres])
            fres = kept[0]
        else:
            self._wait(w, jr)
            gres, gexc = jr.result, jr.exc
            self._countdown(jr)
        sh.pop()

        if self._gate is not None:
            self._gate.acquire()
        try:
            hier.join_heap(P, H)
            if jr.stolen:
                hier.join_heap(P, jr.child_heap)
            if self.tracer is not None:
                self.tracer.emit("join", heap_subject(P))
            if self.config.audit == "joins":
                # with a single runner everyone else is parked outside any
                # memop, so the whole store is quiescent; otherwise only the
                # joined heap is (no descendant of it exists any more)
                serial = self.config.deterministic or self.config.workers == 1
                self._audit(None if serial else [P])
        finally:
            if self._gate is not None:
                self._gate.release()
        parent_heap.pins += 1
        task.state = TaskState.RUNNING
        if fexc is not None:
            raise fexc
        if gexc is not None:
            raise gexc
        return fres, gres

    def _countdown(self, jr: JoinRecord) -> None:
        with self._global_lock:
            n = self.store.get_field_raw(jr.record, 0)
            self.store.set_field_raw(jr.record, 0, n - 1)

    def _wait(self, w: Worker, jr: JoinRecord) -> None:
        det = self.config.deterministic
        while not jr.done:
            other = self._try_steal(w)
            if other is not None:
                self._run_stolen(w, other)
            elif det:
                self._yield()
            else:
                jr.event.wait(0.002)

    def _try_steal(self, w: Worker) -> JoinRecord | None:
        n = len(self._workers)
        if n == 1:
            return None
        v = w.rng.randrange(n - 1)
        if v >= w.id:
            v += 1
        victim = self._workers[v]
        if not victim.deque:
            return None
        with victim.lock:
            if not victim.deque:
                return None
            jr = victim.deque.popleft()
            jr.stolen = True
            jr.thief = w.id
            jr.event = threading.Event()
        self.steal_log.append((w.id, v, jr.id))
        with self._global_lock:
            jr.record = self.store.fresh_obj(self.global_heap, JOIN_LAYOUT, [2, w.id])
        if self.tracer is not None:
            self.tracer.emit("steal", heap_subject(jr.heap))
        log.debug("worker %d stole task %d from worker %d", w.id, jr.id, v)
        return jr

    def _run_stolen(self, w: Worker, jr: JoinRecord) -> None:
        hier = self.hierarchy
        Hg = hier.new_child_heap(jr.heap)
        sh = Superheap(w.id, hier._heaps[Hg].depth, Hg, jr.superheap)
        task = Task(next(self._ids), Hg, jr.parent, sh)
        res, exc, _ = self._run_task(task, jr.thunk, [])
        jr.child_heap = Hg
        jr.result = res
        jr.exc = exc
        self._countdown(jr)
        jr.done = True
        jr.event.set()

    # -- reporting ---------------------------------------------------------------------

    def report(self, **extra: Any) -> StatsReport:
        return self.stats.report(
            wall_time=self.wall_time,
            workers=self.config.workers,
            tasks=self.tasks_executed,
            steals=len(self.steal_log),
            audits=self.audits,
            audit_passed=self.audit_passed,
            seed=self.config.seed,
            **extra,
        )
