"""The heap hierarchy: a tree of heaps mirroring the fork/join task tree.

Each heap carries a depth, a parent link, a readers-writer lock and, while a
collection of its subtree is running, a paired to-space. Joining a child
into its parent re-owns the child's chunks; objects never move.
"""

from __future__ import annotations

import enum
import threading
from typing import Iterator

from .errors import ContractViolation, StructuralError
from .objects import ObjectStore


class Mode(enum.Enum):
    READ = "READ"
    WRITE = "WRITE"


READ = Mode.READ
WRITE = Mode.WRITE


class Role(enum.Enum):
    FROM_SPACE = "from"
    TO_SPACE = "to"
    GLOBAL = "global"


class RWLock:
    """Writer-preferring readers-writer lock.

    Not reentrant and not owner-aware; ownership checks live in the
    hierarchy's per-thread ledger.
    """

    __slots__ = ("_cond", "_readers", "_writer", "_waiting_writers", "acquisitions")

    def __init__(self) -> None:
        self._cond = threading.Condition(threading.Lock())
        self._readers = 0
        self._writer = False
        self._waiting_writers = 0
        self.acquisitions = 0

    def acquire_read(self) -> None:
        with self._cond:
            while self._writer or self._waiting_writers:
                self._cond.wait()
            self._readers += 1
            self.acquisitions += 1

    def release_read(self) -> None:
        with self._cond:
            if self._readers <= 0:
                raise ContractViolation("read release without a read hold")
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self) -> None:
        with self._cond:
            self._waiting_writers += 1
            try:
                while self._writer or self._readers:
                    self._cond.wait()
            finally:
                self._waiting_writers -= 1
            self._writer = True
            self.acquisitions += 1

    def release_write(self) -> None:
        with self._cond:
            if not self._writer:
                raise ContractViolation("write release without a write hold")
            self._writer = False
            self._cond.notify_all()

    @property
    def readers(self) -> int:
        return self._readers

    @property
    def writer(self) -> bool:
        return self._writer

    def idle(self) -> bool:
        return not self._writer and not self._readers


class Heap:
    __slots__ = (
        "id", "depth", "parent", "children", "lock", "role", "paired",
        "retired", "collecting", "pins", "gc_requested", "gc_floor",
    )

    def __init__(self, hid: int, depth: int, parent: int | None, role: Role):
        self.id = hid
        self.depth = depth
        self.parent = parent
        self.children: list[int] = []
        self.lock = RWLock()
        self.role = role
        self.paired: int | None = None
        self.retired = False
        self.collecting = False
        # running (not suspended) tasks currently bound to this heap
        self.pins = 0
        self.gc_requested = False
        # occupancy below which allocation never requests a collection;
        # raised after each collection so live data does not retrigger it
        self.gc_floor = 0

    def __repr__(self) -> str:
        return f"Heap({self.id}, depth={self.depth}, parent={self.parent}, {self.role.value})"


class Superheap:
    """Per user-level-thread LIFO stack of (depth, heap) pairs."""

    __slots__ = ("owner", "stack", "parent", "children")

    def __init__(self, owner: int, depth: int, heap: int, parent: Superheap | None = None):
        self.owner = owner
        self.stack: list[tuple[int, int]] = [(depth, heap)]
        self.parent = parent
        self.children: list[Superheap] = []
        if parent is not None:
            parent.children.append(self)

    @property
    def top(self) -> tuple[int, int]:
        return self.stack[-1]

    def push(self, depth: int, heap: int) -> None:
        if depth <= self.stack[-1][0]:
            raise ContractViolation(
                f"superheap depth must increase: {depth} after {self.stack[-1][0]}"
            )
        self.stack.append((depth, heap))

    def pop(self) -> tuple[int, int]:
        if len(self.stack) == 1:
            raise ContractViolation("cannot pop the bottom of a superheap")
        return self.stack.pop()


class HeapHierarchy:
    def __init__(self, store: ObjectStore | None = None):
        self.store = store if store is not None else ObjectStore()
        self._heaps: dict[int, Heap] = {}
        self._next_id = 0
        self.registry_lock = threading.RLock()
        self._tls = threading.local()
        # (thread name, heap, depth, held write depths) for every WRITE taken
        # out of strictly-decreasing-depth order
        self.order_violations: list[tuple] = []
        self.root = self._make(0, None, Role.FROM_SPACE)
        self.global_heap: int | None = None
        self.store.fwd_write_allowed = self._fwd_write_allowed

    # -- registry -------------------------------------------------------------

    def _make(self, depth: int, parent: int | None, role: Role) -> int:
        with self.registry_lock:
            hid = self._next_id
            self._next_id += 1
            self._heaps[hid] = Heap(hid, depth, parent, role)
            self.store.add_space(hid)
            if parent is not None and role is Role.FROM_SPACE:
                self._heaps[parent].children.append(hid)
        return hid

    def heap(self, h: int) -> Heap:
        try:
            return self._heaps[h]
        except (KeyError, TypeError):
            raise StructuralError(f"unknown heap {h!r}") from None

    def __contains__(self, h: int) -> bool:
        return h in self._heaps

    def new_global_heap(self) -> int:
        """A heap outside the tree for scheduler-internal data."""
        if self.global_heap is None:
            self.global_heap = self._make(-1, None, Role.GLOBAL)
        return self.global_heap

    def live_heaps(self) -> list[int]:
        with self.registry_lock:
            return [
                h.id for h in self._heaps.values()
                if not h.retired and h.role is not Role.GLOBAL
            ]

    def all_heaps(self) -> list[Heap]:
        with self.registry_lock:
            return list(self._heaps.values())

    # -- structure --------------------------------------------------------------

    def new_child_heap(self, parent: int) -> int:
        p = self.heap(parent)
        if p.role is not Role.FROM_SPACE or p.retired:
            raise ContractViolation(f"heap {parent} cannot take children ({p.role.value})")
        return self._make(p.depth + 1, parent, Role.FROM_SPACE)

    def join_heap(self, parent: int, child: int) -> int:
        """Merge ``child`` into ``parent`` without copying. Returns #chunks moved."""
        with self.registry_lock:
            p = self.heap(parent)
            c = self.heap(child)
            if c.retired:
                raise ContractViolation(f"heap {child} is already retired")
            if c.parent != parent or c.role is not Role.FROM_SPACE:
                raise ContractViolation(f"heap {child} is not a child of {parent}")
            if c.children:
                raise ContractViolation(f"heap {child} still has live children {c.children}")
            if not c.lock.idle():
                raise ContractViolation(f"heap {child} is locked")
            n = self.store.move_chunks(child, parent)
            self.store.drop_space(child)
            c.retired = True
            p.children.remove(child)
            if c.gc_requested:
                p.gc_requested = True
            return n

    def depth(self, h: int) -> int:
        return self.heap(h).depth

    def parent(self, h: int) -> int | None:
        return self.heap(h).parent

    def children(self, h: int) -> list[int]:
        return list(self.heap(h).children)

    def ancestor_or_self(self, a: int, b: int) -> bool:
        """True iff ``a`` is ``b`` or lies on ``b``'s parent chain."""
        ha = self.heap(a)
        if ha.role is Role.GLOBAL:
            return a == b
        hb = self.heap(b)
        if hb.role is Role.GLOBAL:
            return False
        heaps = self._heaps
        da = ha.depth
        while hb.depth > da:
            hb = heaps[hb.parent]
        return hb.id == a

    def subtree(self, top: int) -> list[int]:
        with self.registry_lock:
            out = [top]
            i = 0
            while i < len(out):
                out.extend(self._heaps[out[i]].children)
                i += 1
            return out

    def path_to_root(self, h: int) -> Iterator[int]:
        cur: int | None = h
        while cur is not None:
            yield cur
            cur = self._heaps[cur].parent

    def chunks(self, h: int) -> list[int]:
        return [c.id for c in self.store.space(h).chunks]

    def occupancy(self, h: int) -> int:
        return self.store.space(h).occupancy

    # -- locking ----------------------------------------------------------------

    def _held(self) -> dict[int, Mode]:
        held = getattr(self._tls, "held", None)
        if held is None:
            held = self._tls.held = {}
        return held

    def lock(self, h: int, mode: Mode) -> None:
        heap = self.heap(h)
        held = self._held()
        if h in held:
            raise ContractViolation(f"reentrant acquisition of heap {h} lock")
        if mode is WRITE:
            deeper_or_equal = [
                self._heaps[o].depth for o, m in held.items()
                if m is WRITE and self._heaps[o].depth <= heap.depth
            ]
            if deeper_or_equal:
                self.order_violations.append(
                    (threading.current_thread().name, h, heap.depth, tuple(deeper_or_equal))
                )
            heap.lock.acquire_write()
        else:
            heap.lock.acquire_read()
        held[h] = mode

    def unlock(self, h: int) -> None:
        heap = self.heap(h)
        held = self._held()
        mode = held.pop(h, None)
        if mode is None:
            raise ContractViolation(f"unlock of heap {h} without holding its lock")
        if mode is WRITE:
            heap.lock.release_write()
        else:
            heap.lock.release_read()

    def held_locks(self) -> dict[int, Mode]:
        return dict(self._held())

    def _fwd_write_allowed(self, h: int) -> bool:
        heap = self._heaps.get(h)
        if heap is None:
            return False
        return heap.collecting or self._held().get(h) is WRITE

    # -- semispaces ---------------------------------------------------------------

    def begin_collection(self, heaps: list[int]) -> None:
        with self.registry_lock:
            for h in heaps:
                heap = self.heap(h)
                if heap.role is not Role.FROM_SPACE or heap.retired:
                    raise ContractViolation(f"heap {h} cannot be collected")
                if heap.collecting:
                    raise ContractViolation(f"heap {h} is already being collected")
            for h in heaps:
                self._heaps[h].collecting = True

    def to_space_of(self, h: int) -> int:
        heap = self.heap(h)
        if not heap.collecting:
            raise ContractViolation(f"toSpaceOf({h}) outside a collection")
        if heap.paired is None:
            ts = self._make(heap.depth, heap.parent, Role.TO_SPACE)
            self._heaps[ts].paired = h
            self._heaps[ts].collecting = True
            heap.paired = ts
        return heap.paired

    def is_to_space(self, h: int) -> bool:
        return self.heap(h).role is Role.TO_SPACE

    def switch_semispaces(self, h: int) -> int:
        """Install the to-space's chunks at ``h``'s position; retire the old chunks.

        Returns the number of from-space bytes discarded.
        """
        with self.registry_lock:
            heap = self.heap(h)
            if not heap.collecting:
                raise ContractViolation(f"switchSemispaces({h}) outside a collection")
            freed = self.store.retire_chunks(h)
            if heap.paired is not None:
                ts = self._heaps[heap.paired]
                self.store.move_chunks(ts.id, h)
                ts.retired = True
                ts.collecting = False
                self.store.drop_space(ts.id)
                heap.paired = None
            heap.collecting = False
            heap.gc_requested = False
            return freed
