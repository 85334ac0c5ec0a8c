"""Promotion-aware semispace collection of a heap subtree.

``collect(top)`` evacuates everything reachable from the registered roots
that lives in the subtree under ``top`` into per-heap to-spaces, then swaps
semispaces. A forwarding chain that leaves the collection zone upward means
the object was promoted: references to the stale copy are redirected to the
shallower copy, which eliminates the duplicate.

No heap lock is taken. The caller guarantees quiescence: no task bound to a
subtree heap is running and no memory operation touches the subtree.
"""

from __future__ import annotations

import itertools
import threading
import time
from dataclasses import dataclass
from typing import Any

from .errors import ContractViolation
from .heaps import HeapHierarchy, Role
from .objects import ObjRef, Record
from .stats import Stats
from .trace import Tracer, heap_subject


class Cell:
    """A mutable slot holding an ObjRef (or None) that collections keep current."""

    __slots__ = ("value",)

    def __init__(self, value: ObjRef | None = None):
        self.value = value

    def __repr__(self) -> str:
        return f"Cell({self.value!r})"


class RootSet:
    def __init__(self) -> None:
        self._roots: dict[int, tuple[Any, Cell]] = {}
        self._ids = itertools.count()
        self._lock = threading.Lock()

    def register_root(self, task: Any, cell: Cell) -> int:
        rid = next(self._ids)
        with self._lock:
            self._roots[rid] = (task, cell)
        return rid

    def unregister_root(self, rid: int) -> None:
        with self._lock:
            if self._roots.pop(rid, None) is None:
                raise ContractViolation(f"root {rid} is not registered")

    def cells(self) -> list[Cell]:
        with self._lock:
            return [c for _, c in self._roots.values()]

    def __len__(self) -> int:
        return len(self._roots)


@dataclass
class CollectionReport:
    top: int = -1
    heaps_collected: int = 0
    objects_copied: int = 0
    bytes_copied: int = 0
    bytes_discarded: int = 0
    duplicates_elided: int = 0

    @property
    def bytes_freed(self) -> int:
        return max(0, self.bytes_discarded - self.bytes_copied)


class Collector:
    def __init__(
        self,
        hierarchy: HeapHierarchy,
        roots: RootSet | None = None,
        stats: Stats | None = None,
        tracer: Tracer | None = None,
    ):
        self.hierarchy = hierarchy
        self.store = hierarchy.store
        self.roots = roots if roots is not None else RootSet()
        self.stats = stats
        self.tracer = tracer
        # per-collection state, keyed by thread so disjoint subtrees can be
        # collected concurrently
        self._tls = threading.local()

    def register_root(self, task: Any, cell: Cell) -> int:
        return self.roots.register_root(task, cell)

    def unregister_root(self, rid: int) -> None:
        self.roots.unregister_root(rid)

    # -- collection -----------------------------------------------------------------

    def check_quiescent(self, subtree: list[int]) -> None:
        hier = self.hierarchy
        for h in subtree:
            heap = hier.heap(h)
            if heap.pins:
                raise ContractViolation(f"heap {h} has {heap.pins} running task(s)")
            if not heap.lock.idle():
                raise ContractViolation(f"heap {h} is locked")

    def collect(self, top: int, extra: list[Cell] | None = None) -> CollectionReport:
        """Collect the subtree rooted at ``top``.

        ``extra`` cells act as roots for this collection only.
        """
        hier = self.hierarchy
        t0 = time.perf_counter()
        subtree = hier.subtree(top)
        self.check_quiescent(subtree)
        if self.tracer is not None:
            self.tracer.emit("collectStart", heap_subject(top))
        hier.begin_collection(subtree)
        report = CollectionReport(top=top, heaps_collected=len(subtree))
        st = self._tls
        st.top = top
        st.zone = frozenset(subtree)
        st.report = report
        st.pending = []
        st.elided = set()
        try:
            cells = self.roots.cells()
            if extra:
                cells.extend(extra)
            for cell in cells:
                v = cell.value
                if v is not None and self._in_zone_or_above(v):
                    cell.value = self._copy(v)
            self._scan()
            report.duplicates_elided = len(st.elided)
        finally:
            for h in subtree:
                report.bytes_discarded += hier.switch_semispaces(h)
            st.zone = st.report = st.pending = st.elided = None
        if self.tracer is not None:
            self.tracer.emit("collectEnd", heap_subject(top))
        if self.stats is not None:
            self.stats.record_collection(report, time.perf_counter() - t0)
        return report

    def _in_zone_or_above(self, ref: ObjRef) -> bool:
        # roots belonging to unrelated branches are none of this collection's business
        owner = self.store.chunks[ref[0]].owner
        return owner in self._tls.zone or self.hierarchy.ancestor_or_self(owner, self._tls.top)

    def cheney_copy(self, top: int, obj: ObjRef) -> ObjRef:
        """Copy one object (and, via the scan, everything it reaches) during ``collect(top)``."""
        st = self._tls
        if getattr(st, "zone", None) is None or st.top != top:
            raise ContractViolation(f"cheney_copy outside collect({top})")
        new = self._copy(obj)
        self._scan()
        return new

    def _copy(self, ref: ObjRef) -> ObjRef:
        st = self._tls
        hier = self.hierarchy
        heaps = hier._heaps
        store = self.store
        chunks = store.chunks
        top_depth = heaps[st.top].depth
        start = ref
        while True:
            owner = chunks[ref[0]].owner
            heap = heaps[owner]
            if heap.depth < top_depth:
                if ref != start:
                    st.elided.add(start)
                return ref
            if heap.role is Role.TO_SPACE:
                return ref
            if owner not in st.zone:
                raise ContractViolation(
                    f"{ref!r} in heap {owner} is reachable but outside the subtree of {st.top}"
                )
            rec = chunks[ref[0]].records[ref[1]]
            if rec.fwd is None:
                break
            ref = rec.fwd
        new = store.copy_into(hier.to_space_of(owner), ref)
        store.set_fwd(ref, new)
        st.report.objects_copied += 1
        st.report.bytes_copied += rec.layout.size
        st.pending.append(chunks[new[0]].records[new[1]])
        return new

    def _scan(self) -> None:
        pending: list[Record] = self._tls.pending
        copy = self._copy
        while pending:
            rec = pending.pop()
            vals = rec.values
            for f in rec.layout.ptr_fields:
                v = vals[f]
                if v is not None:
                    vals[f] = copy(v)
