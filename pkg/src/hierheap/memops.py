"""High-level memory operations over hierarchical heaps.

``alloc``, ``read_immutable``, ``read_mutable``, ``write_nonptr`` and
``write_ptr`` (with ``write_promote`` and ``promote`` behind it) follow the
published algorithms step for step: optimistic fast paths that check the
forwarding slot after the access, double-checked locking in
``find_master``, and bottom-up WRITE locking of the promotion path.

Every operation bumps one (operation class, locality) counter. Locality is
decided on entry: *promoted* if the object has a forwarding reference,
otherwise *local* if it lives in the running task's heap, else *distant*.
"""

from __future__ import annotations

import threading
from typing import Any, Iterable

from . import context
from .errors import ContractViolation, EntanglementError
from .heaps import READ, WRITE, HeapHierarchy
from .objects import ObjectLayout, ObjRef, Record
from .stats import N_LOC, Locality, OpClass, Stats
from .trace import Tracer, heap_subject, obj_subject

_LOCAL, _DISTANT, _PROMOTED = Locality.LOCAL, Locality.DISTANT, Locality.PROMOTED
_RI = OpClass.READ_IMMUTABLE * N_LOC
_RM = OpClass.READ_MUTABLE * N_LOC
_WS = OpClass.WRITE_SCALAR * N_LOC
_WN = OpClass.WRITE_REF_NONPROMOTING * N_LOC
_WP = OpClass.WRITE_REF_PROMOTING * N_LOC
_LABEL = {
    _RI: "ReadImmutable", _RM: "ReadMutable", _WS: "WriteScalar",
    _WN: "WriteRefNonPromoting", _WP: "WriteRefPromoting",
}
_LOC_LABEL = ("Local", "Distant", "Promoted")

_N_STRIPES = 64


class MasterHandle:
    """The master copy of an object with its heap READ-locked by the caller."""

    __slots__ = ("obj", "heap", "_ops", "_released")

    def __init__(self, ops: MemOps, obj: ObjRef, heap: int):
        self._ops = ops
        self.obj = obj
        self.heap = heap
        self._released = False

    def release(self) -> None:
        if self._released:
            raise ContractViolation("master handle released twice")
        self._released = True
        self._ops._unlock(self.heap)

    def __enter__(self) -> MasterHandle:
        return self

    def __exit__(self, *exc) -> None:
        self.release()

    def __repr__(self) -> str:
        return f"MasterHandle({self.obj!r}, heap={self.heap})"


class MemOps:
    def __init__(
        self,
        hierarchy: HeapHierarchy,
        stats: Stats | None = None,
        tracer: Tracer | None = None,
    ):
        self.hierarchy = hierarchy
        self.store = hierarchy.store
        self.stats = stats if stats is not None else Stats()
        self.tracer = tracer
        self.gc_threshold: int | None = None
        self._heaps = hierarchy._heaps
        self._stripes = [threading.Lock() for _ in range(_N_STRIPES)]

    # -- plumbing ---------------------------------------------------------------

    def _rec(self, obj: ObjRef) -> Record:
        try:
            ch = self.store.chunks[obj[0]]
            return ch.records[obj[1]]
        except (TypeError, IndexError):
            raise ContractViolation(f"invalid or dangling reference {obj!r}") from None

    def _owner(self, obj: ObjRef) -> int:
        return self.store.chunks[obj[0]].owner

    @staticmethod
    def _current_heap() -> int:
        task = context.current_task()
        if task is None:
            raise ContractViolation("memory operation outside of any task")
        return task.heap

    def _lock(self, h: int, mode) -> None:
        self.hierarchy.lock(h, mode)
        self.stats.local().op_locks += 1
        if self.tracer is not None:
            self.tracer.emit("lock", heap_subject(h))

    def _unlock(self, h: int) -> None:
        self.hierarchy.unlock(h)
        if self.tracer is not None:
            self.tracer.emit("unlock", heap_subject(h))

    def _count(self, st, base: int, loc: int, event: str, obj: ObjRef) -> None:
        key = base + loc
        st.counters[key] += 1
        if st.op_locks:
            st.locks[key] += st.op_locks
        if self.tracer is not None:
            self.tracer.emit(event, obj_subject(obj), f"{_LABEL[base]}.{_LOC_LABEL[loc]}")

    def _begin(self):
        st = self.stats.local()
        st.op_total += 1
        st.op_locks = 0
        return st

    @staticmethod
    def _field(rec: Record, i: int):
        lay = rec.layout
        if i < 0 or i >= lay.arity:
            raise ContractViolation(f"field {i} out of range for arity {lay.arity}")
        u = lay.uniform
        return u if u is not None else lay._descs[i]

    # -- allocation -------------------------------------------------------------

    def alloc(self, layout: ObjectLayout, init: Iterable[Any]) -> ObjRef:
        heap = self._current_heap()
        ref = self.store.fresh_obj(heap, layout, init)
        st = self.stats.local()
        st.alloc_count += 1
        st.alloc_bytes += layout.size
        if self.gc_threshold is not None:
            hp = self._heaps[heap]
            occ = self.store._spaces[heap].occupancy
            if occ > self.gc_threshold and occ > hp.gc_floor:
                hp.gc_requested = True
        if self.tracer is not None:
            self.tracer.emit("alloc", heap_subject(heap))
        return ref

    # -- reads --------------------------------------------------------------------

    def read_immutable(self, obj: ObjRef, i: int) -> Any:
        st = self._begin()
        rec = self._rec(obj)
        if self._field(rec, i).mutable:
            raise ContractViolation(f"read_immutable on mutable field {i} of {obj!r}")
        v = rec.values[i]
        if rec.fwd is not None:
            loc = _PROMOTED
        elif self.store.chunks[obj[0]].owner == self._current_heap():
            loc = _LOCAL
        else:
            loc = _DISTANT
        self._count(st, _RI, loc, "readImm", obj)
        return v

    def _find_master(self, obj: ObjRef) -> tuple[ObjRef, int, Record]:
        chunks = self.store.chunks
        while True:
            rec = self._rec(obj)
            while rec.fwd is not None:
                obj = rec.fwd
                rec = self._rec(obj)
            h = chunks[obj[0]].owner
            self._lock(h, READ)
            if rec.fwd is None:
                return obj, h, rec
            self._unlock(h)

    def find_master(self, obj: ObjRef) -> MasterHandle:
        """End of ``obj``'s forwarding chain, returned with its heap READ-locked."""
        m, h, _ = self._find_master(obj)
        return MasterHandle(self, m, h)

    def read_mutable(self, obj: ObjRef, i: int) -> Any:
        st = self._begin()
        rec = self._rec(obj)
        if not self._field(rec, i).mutable:
            raise ContractViolation(f"read_mutable on immutable field {i} of {obj!r}")
        res = rec.values[i]
        if rec.fwd is None:
            owner = self.store.chunks[obj[0]].owner
            loc = _LOCAL if owner == self._current_heap() else _DISTANT
            self._count(st, _RM, loc, "readMut", obj)
            return res
        self._current_heap()
        m, h, mrec = self._find_master(obj)
        res = mrec.values[i]
        self._unlock(h)
        self._count(st, _RM, _PROMOTED, "readMut", obj)
        return res

    # -- non-pointer writes ---------------------------------------------------------

    def write_nonptr(self, obj: ObjRef, i: int, val: Any) -> None:
        st = self._begin()
        rec = self._rec(obj)
        d = self._field(rec, i)
        if d.ref or not d.mutable:
            raise ContractViolation(f"write_nonptr on {d!r} field {i} of {obj!r}")
        if val is None or type(val) is ObjRef:
            raise ContractViolation(f"write_nonptr given a reference {val!r}")
        cur = self._current_heap()
        rec.values[i] = val
        if rec.fwd is None:
            loc = _LOCAL if self.store.chunks[obj[0]].owner == cur else _DISTANT
            self._count(st, _WS, loc, "writeScalar", obj)
            return
        m, h, mrec = self._find_master(obj)
        mrec.values[i] = val
        self._unlock(h)
        self._count(st, _WS, _PROMOTED, "writeScalar", obj)

    def compare_and_swap(self, obj: ObjRef, i: int, expected: Any, new: Any) -> bool:
        """Atomically replace a mutable scalar field of the master copy if it equals ``expected``.

        Counted as a scalar write. Local unforwarded objects need no heap lock:
        nothing else can reach them, so nothing can promote them.
        """
        st = self._begin()
        rec = self._rec(obj)
        d = self._field(rec, i)
        if d.ref or not d.mutable:
            raise ContractViolation(f"compare_and_swap on {d!r} field {i} of {obj!r}")
        if new is None or type(new) is ObjRef:
            raise ContractViolation(f"compare_and_swap given a reference {new!r}")
        cur = self._current_heap()
        if rec.fwd is None and self.store.chunks[obj[0]].owner == cur:
            with self._stripes[hash(obj) % _N_STRIPES]:
                ok = rec.values[i] == expected
                if ok:
                    rec.values[i] = new
            self._count(st, _WS, _LOCAL, "writeScalar", obj)
            return ok
        loc = _PROMOTED if rec.fwd is not None else _DISTANT
        m, h, mrec = self._find_master(obj)
        with self._stripes[hash(m) % _N_STRIPES]:
            ok = mrec.values[i] == expected
            if ok:
                mrec.values[i] = new
        self._unlock(h)
        self._count(st, _WS, loc, "writeScalar", obj)
        return ok

    # -- pointer writes -------------------------------------------------------------

    def write_ptr(self, obj: ObjRef, i: int, ptr: ObjRef | None) -> None:
        st = self._begin()
        rec = self._rec(obj)
        d = self._field(rec, i)
        if not d.ref or not d.mutable:
            raise ContractViolation(f"write_ptr on {d!r} field {i} of {obj!r}")
        cur = self._current_heap()
        heaps = self._heaps
        chunks = self.store.chunks
        hp = None
        if ptr is not None:
            if type(ptr) is not ObjRef:
                raise ContractViolation(f"write_ptr given a non-reference {ptr!r}")
            self._rec(ptr)
            hp = chunks[ptr[0]].owner
            if hp != cur and not self.hierarchy.ancestor_or_self(hp, cur):
                raise EntanglementError(
                    f"{ptr!r} lives in heap {hp}, which is not on the ancestor chain of heap {cur}"
                )
        if rec.fwd is None and chunks[obj[0]].owner == cur:
            rec.values[i] = ptr
            self._count(st, _WN, _LOCAL, "writeRef", obj)
            return
        loc = _PROMOTED if rec.fwd is not None else _DISTANT
        m, h, mrec = self._find_master(obj)
        if ptr is None or heaps[h].depth >= heaps[hp].depth:
            mrec.values[i] = ptr
            self._unlock(h)
            self._count(st, _WN, loc, "writeRef", obj)
            return
        self._unlock(h)
        self.write_promote(m, i, ptr)
        self._count(st, _WP, loc, "writeRef", obj)

    def write_promote(self, obj: ObjRef, i: int, ptr: ObjRef) -> None:
        """Promote ``ptr`` into the heap of ``obj``'s master and store the copy there.

        Locks the path from ``heapOf(ptr)`` up to the master's heap in WRITE
        mode, deepest first, following ``obj``'s forwarding chain while it
        keeps moving. Each iteration strictly decreases the candidate
        master's depth, so the loop ends by the root at the latest.
        """
        heaps = self._heaps
        chunks = self.store.chunks
        hp = chunks[ptr[0]].owner
        if heaps[chunks[obj[0]].owner].depth >= heaps[hp].depth:
            raise ContractViolation("write_promote needs depth(heapOf(obj)) < depth(heapOf(ptr))")
        st = self.stats.local()
        tracer = self.tracer
        if tracer is not None:
            tracer.emit("promoteStart", obj_subject(ptr))
        locked = [hp]
        self._lock(hp, WRITE)
        try:
            cur = hp
            while True:
                target = chunks[obj[0]].owner
                while cur != target:
                    nxt = heaps[cur].parent
                    if nxt is None:
                        raise EntanglementError(
                            f"heap {target} is not an ancestor of heap {hp}"
                        )
                    self._lock(nxt, WRITE)
                    locked.append(nxt)
                    cur = nxt
                rec = self._rec(obj)
                if rec.fwd is None:
                    break
                obj = rec.fwd
            promoted = self.promote(cur, ptr)
            rec.values[i] = promoted
        finally:
            for h in reversed(locked):
                self._unlock(h)
        st.promotions += 1
        if tracer is not None:
            tracer.emit("promoteEnd", obj_subject(promoted))

    def promote(self, heap: int, obj: ObjRef) -> ObjRef:
        """Copy ``obj`` and everything it reaches below ``heap`` into ``heap``.

        Objects at or above ``heap`` (directly or through their forwarding
        chain) are reused. Each original's forwarding slot is set before its
        fields are visited, which keeps cycles and sharing intact. Runs with
        an explicit work list instead of recursion.
        """
        heaps = self._heaps
        chunks = self.store.chunks
        store = self.store
        depth = heaps[heap].depth
        st = self.stats.local()
        pending: list[Record] = []

        def resolve(ref: ObjRef) -> ObjRef:
            while True:
                if heaps[chunks[ref[0]].owner].depth <= depth:
                    return ref
                rec = self._rec(ref)
                if rec.fwd is None:
                    break
                ref = rec.fwd
            new = store.copy_into(heap, ref)
            store.set_fwd(ref, new)
            st.objects_promoted += 1
            st.bytes_promoted += rec.layout.size
            pending.append(self._rec(new))
            return new

        top = resolve(obj)
        while pending:
            nrec = pending.pop()
            vals = nrec.values
            for f in nrec.layout.ptr_fields:
                v = vals[f]
                if v is not None:
                    vals[f] = resolve(v)
        return top


class HookedMemOps(MemOps):
    """MemOps that call ``hook.before()``/``hook.after()`` around every operation.

    Used for exhaustive per-operation auditing and for seeded preemption in
    deterministic mode.
    """

    def __init__(self, hierarchy, stats=None, tracer=None, *, hook):
        super().__init__(hierarchy, stats, tracer)
        self.hook = hook

    def _wrap(name):
        base = getattr(MemOps, name)

        def op(self, *args):
            self.hook.before()
            try:
                return base(self, *args)
            finally:
                self.hook.after()

        op.__name__ = name
        op.__doc__ = base.__doc__
        return op

    alloc = _wrap("alloc")
    read_immutable = _wrap("read_immutable")
    read_mutable = _wrap("read_mutable")
    write_nonptr = _wrap("write_nonptr")
    write_ptr = _wrap("write_ptr")
    compare_and_swap = _wrap("compare_and_swap")
    del _wrap
