"""Chunked object store.

Objects live in chunks; every chunk is owned by exactly one heap and an
object's owning heap is found through its chunk (``heap_of`` is a table
lookup, the portable stand-in for address masking). References are
``ObjRef(chunk, slot)`` pairs that stay valid when a chunk changes owner.

Each record has a forwarding slot kept outside the field data. Scalar
fields hold Python ints/floats ("words"); reference fields hold an
``ObjRef`` or ``None`` (Null).
"""

from __future__ import annotations

import enum
import threading
from functools import lru_cache
from typing import Any, Iterable, Iterator, NamedTuple, Sequence

from .errors import ContractViolation, StructuralError

WORD_BYTES = 8
#: header word plus the out-of-band forwarding slot
HEADER_BYTES = 2 * WORD_BYTES

DEFAULT_MIN_CHUNK = 4096
DEFAULT_MAX_CHUNK = 1 << 20


class Kind(enum.Enum):
    SCALAR = "scalar"
    REFERENCE = "reference"


class Mutability(enum.Enum):
    IMMUTABLE = "immutable"
    MUTABLE = "mutable"


class FieldDescriptor:
    """Kind and mutability of one field. Only four instances exist."""

    __slots__ = ("kind", "mutability", "ref", "mutable")

    _interned: dict[tuple[Kind, Mutability], FieldDescriptor] = {}

    def __new__(cls, kind: Kind, mutability: Mutability) -> FieldDescriptor:
        key = (kind, mutability)
        inst = cls._interned.get(key)
        if inst is None:
            inst = super().__new__(cls)
            object.__setattr__(inst, "kind", kind)
            object.__setattr__(inst, "mutability", mutability)
            object.__setattr__(inst, "ref", kind is Kind.REFERENCE)
            object.__setattr__(inst, "mutable", mutability is Mutability.MUTABLE)
            cls._interned[key] = inst
        return inst

    def __setattr__(self, name, value):
        raise AttributeError("FieldDescriptor is immutable")

    def __reduce__(self):
        return (FieldDescriptor, (self.kind, self.mutability))

    def __repr__(self) -> str:
        return f"{self.kind.value}/{self.mutability.value}"


SCALAR_IMM = FieldDescriptor(Kind.SCALAR, Mutability.IMMUTABLE)
SCALAR_MUT = FieldDescriptor(Kind.SCALAR, Mutability.MUTABLE)
REF_IMM = FieldDescriptor(Kind.REFERENCE, Mutability.IMMUTABLE)
REF_MUT = FieldDescriptor(Kind.REFERENCE, Mutability.MUTABLE)


class ObjectLayout:
    """Ordered field descriptors of an object.

    Homogeneous layouts (arrays) store a single descriptor and never
    materialise per-field tuples, so a million-element array costs O(1).
    """

    __slots__ = ("arity", "uniform", "_descs", "ptr_fields", "nonptr_fields", "size")

    def __init__(self, descriptors: Sequence[FieldDescriptor]):
        descs = tuple(descriptors)
        for d in descs:
            if not isinstance(d, FieldDescriptor):
                raise ContractViolation(f"not a field descriptor: {d!r}")
        self.arity = len(descs)
        first = descs[0] if descs else None
        if descs and all(d is first for d in descs):
            self.uniform = first
            self._descs = None
        else:
            self.uniform = None
            self._descs = descs
        self.ptr_fields = tuple(i for i, d in enumerate(descs) if d.ref)
        self.nonptr_fields = tuple(i for i, d in enumerate(descs) if not d.ref)
        self.size = HEADER_BYTES + WORD_BYTES * self.arity

    @classmethod
    def array(cls, n: int, desc: FieldDescriptor) -> ObjectLayout:
        return _array_layout(n, desc)

    def descriptor(self, i: int) -> FieldDescriptor:
        if not 0 <= i < self.arity:
            raise ContractViolation(f"field {i} out of range for arity {self.arity}")
        return self.uniform if self._descs is None else self._descs[i]

    @property
    def descriptors(self) -> tuple[FieldDescriptor, ...]:
        if self._descs is None:
            return (self.uniform,) * self.arity
        return self._descs

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ObjectLayout) and (
            self.arity == other.arity and self.descriptors == other.descriptors
        )

    def __hash__(self) -> int:
        return hash((self.arity, self.uniform, self._descs))

    def __repr__(self) -> str:
        if self._descs is None and self.arity:
            return f"ObjectLayout({self.uniform!r} x {self.arity})"
        return f"ObjectLayout({list(self.descriptors)!r})"


@lru_cache(maxsize=4096)
def _array_layout(n: int, desc: FieldDescriptor) -> ObjectLayout:
    lay = ObjectLayout.__new__(ObjectLayout)
    lay.arity = n
    lay.uniform = desc if n else None
    lay._descs = None if n else ()
    idx = range(n)
    lay.ptr_fields = idx if desc.ref else range(0)
    lay.nonptr_fields = range(0) if desc.ref else idx
    lay.size = HEADER_BYTES + WORD_BYTES * n
    return lay


EMPTY_LAYOUT = ObjectLayout(())


class ObjRef(NamedTuple):
    chunk: int
    slot: int

    def __repr__(self) -> str:
        return f"ObjRef({self.chunk}:{self.slot})"


class Record:
    __slots__ = ("layout", "values", "fwd")

    def __init__(self, layout: ObjectLayout, values: list, fwd: ObjRef | None = None):
        self.layout = layout
        self.values = values
        self.fwd = fwd


class Chunk:
    __slots__ = ("id", "owner", "capacity", "used", "records", "retired")

    def __init__(self, cid: int, owner: int, capacity: int):
        self.id = cid
        self.owner = owner
        self.capacity = capacity
        self.used = 0
        self.records: list[Record] | None = []
        self.retired = False

    def __repr__(self) -> str:
        return f"Chunk({self.id}, owner={self.owner}, {self.used}/{self.capacity})"


class HeapSpace:
    """Allocation state of one heap: its chunk list and occupancy."""

    __slots__ = ("heap", "chunks", "occupancy", "objects", "current", "next_size")

    def __init__(self, heap: int, min_chunk: int):
        self.heap = heap
        self.chunks: list[Chunk] = []
        self.occupancy = 0
        self.objects = 0
        self.current: Chunk | None = None
        self.next_size = min_chunk


def _is_scalar(v: Any) -> bool:
    return v is not None and type(v) is not ObjRef


class ObjectStore:
    def __init__(
        self,
        *,
        min_chunk: int = DEFAULT_MIN_CHUNK,
        max_chunk: int = DEFAULT_MAX_CHUNK,
        debug: bool = True,
    ):
        if min_chunk <= 0 or min_chunk & (min_chunk - 1):
            raise ValueError("min_chunk must be a power of two")
        if max_chunk < min_chunk:
            raise ValueError("max_chunk must be >= min_chunk")
        self.min_chunk = min_chunk
        self.max_chunk = max_chunk
        self.debug = debug
        self.chunks: list[Chunk] = []
        self._spaces: dict[int, HeapSpace] = {}
        self._pool: dict[int, list[Chunk]] = {}
        self._table_lock = threading.Lock()
        # installed by the hierarchy: heap id -> True when the caller may set
        # forwarding slots in that heap (holds its WRITE lock, or collecting)
        self.fwd_write_allowed = None

    # -- spaces ---------------------------------------------------------------

    def add_space(self, heap: int) -> HeapSpace:
        if heap in self._spaces:
            raise StructuralError(f"heap {heap} already has a space")
        sp = HeapSpace(heap, self.min_chunk)
        self._spaces[heap] = sp
        return sp

    def space(self, heap: int) -> HeapSpace:
        try:
            return self._spaces[heap]
        except KeyError:
            raise StructuralError(f"unknown heap {heap}") from None

    def has_space(self, heap: int) -> bool:
        return heap in self._spaces

    def drop_space(self, heap: int) -> None:
        sp = self.space(heap)
        if sp.chunks:
            raise ContractViolation(f"heap {heap} still owns {len(sp.chunks)} chunks")
        del self._spaces[heap]

    # -- allocation -------------------------------------------------------------

    def _new_chunk(self, sp: HeapSpace, size: int) -> Chunk:
        if size > self.max_chunk:
            cap = size
        else:
            cap = sp.next_size
            while cap < size:
                cap *= 2
            sp.next_size = min(cap * 2, self.max_chunk)
        with self._table_lock:
            pooled = self._pool.get(cap)
            if pooled:
                ch = pooled.pop()
                ch.owner = sp.heap
                ch.used = 0
                ch.records = []
                ch.retired = False
            else:
                ch = Chunk(len(self.chunks), sp.heap, cap)
                self.chunks.append(ch)
        sp.chunks.append(ch)
        if size <= self.max_chunk:
            sp.current = ch
        return ch

    def _place(self, sp: HeapSpace, rec: Record) -> ObjRef:
        size = rec.layout.size
        ch = sp.current
        if ch is None or ch.used + size > ch.capacity:
            ch = self._new_chunk(sp, size)
        ch.used += size
        recs = ch.records
        slot = len(recs)
        recs.append(rec)
        sp.occupancy += size
        sp.objects += 1
        return ObjRef(ch.id, slot)

    def fresh_obj(self, heap: int, layout: ObjectLayout, init: Iterable[Any]) -> ObjRef:
        """Allocate a new object in ``heap`` with the given initial values."""
        sp = self._spaces.get(heap)
        if sp is None:
            raise StructuralError(f"unknown heap {heap}")
        if not isinstance(layout, ObjectLayout):
            raise ContractViolation(f"not a layout: {layout!r}")
        values = list(init)
        if len(values) != layout.arity:
            raise ContractViolation(
                f"{len(values)} initial values for a layout of arity {layout.arity}"
            )
        self._check_init(layout, values)
        return self._place(sp, Record(layout, values))

    def _check_init(self, layout: ObjectLayout, values: list) -> None:
        u = layout.uniform
        if u is not None and not u.ref:
            if None in values or ObjRef in set(map(type, values)):
                raise ContractViolation("scalar field initialised with a reference")
            return
        for i, v in enumerate(values):
            d = u if u is not None else layout._descs[i]
            if d.ref:
                if v is not None:
                    if type(v) is not ObjRef:
                        raise ContractViolation(f"field {i}: {v!r} is not a reference")
                    if self.debug:
                        self._chunk_of(v)
            elif not _is_scalar(v):
                raise ContractViolation(f"field {i}: scalar field given {v!r}")

    def copy_into(self, heap: int, src: ObjRef) -> ObjRef:
        """Allocate a verbatim copy of ``src``'s fields in ``heap`` (forwarding slot empty)."""
        rec = self.record(src)
        return self._place(self._spaces[heap], Record(rec.layout, rec.values.copy()))

    # -- lookup ---------------------------------------------------------------

    def _chunk_of(self, ref: ObjRef) -> Chunk:
        try:
            ch = self.chunks[ref[0]]
        except (IndexError, TypeError):
            raise ContractViolation(f"invalid reference {ref!r}") from None
        if ch.retired:
            raise ContractViolation(f"dangling reference {ref!r} into a retired chunk")
        return ch

    def record(self, ref: ObjRef) -> Record:
        ch = self._chunk_of(ref)
        try:
            return ch.records[ref[1]]
        except IndexError:
            raise ContractViolation(f"invalid reference {ref!r}") from None

    def is_valid(self, ref: Any) -> bool:
        if type(ref) is not ObjRef:
            return False
        if not 0 <= ref.chunk < len(self.chunks):
            return False
        ch = self.chunks[ref.chunk]
        return not ch.retired and 0 <= ref.slot < len(ch.records)

    def heap_of(self, ref: ObjRef) -> int:
        if self.debug:
            return self._chunk_of(ref).owner
        return self.chunks[ref[0]].owner

    def layout_of(self, ref: ObjRef) -> ObjectLayout:
        return self.record(ref).layout

    def size_of(self, ref: ObjRef) -> int:
        return self.record(ref).layout.size

    # -- raw field access ---------------------------------------------------------

    def get_field_raw(self, ref: ObjRef, i: int) -> Any:
        rec = self.record(ref)
        if not 0 <= i < rec.layout.arity:
            raise ContractViolation(f"field {i} out of range for arity {rec.layout.arity}")
        return rec.values[i]

    def set_field_raw(self, ref: ObjRef, i: int, v: Any) -> None:
        """Store without mutability or disentanglement checks (kind is still checked)."""
        rec = self.record(ref)
        d = rec.layout.descriptor(i)
        if d.ref:
            if v is not None and type(v) is not ObjRef:
                raise ContractViolation(f"reference field {i} given {v!r}")
        elif not _is_scalar(v):
            raise ContractViolation(f"scalar field {i} given {v!r}")
        rec.values[i] = v

    def ptr_fields(self, ref: ObjRef) -> list[int]:
        return list(self.record(ref).layout.ptr_fields)

    def nonptr_fields(self, ref: ObjRef) -> list[int]:
        return list(self.record(ref).layout.nonptr_fields)

    # -- forwarding slot ------------------------------------------------------

    def has_fwd(self, ref: ObjRef) -> bool:
        return self.record(ref).fwd is not None

    def read_fwd(self, ref: ObjRef) -> ObjRef:
        fwd = self.record(ref).fwd
        if fwd is None:
            raise ContractViolation(f"{ref!r} has no forwarding reference")
        return fwd

    def set_fwd(self, ref: ObjRef, target: ObjRef) -> None:
        rec = self.record(ref)
        if rec.fwd is not None:
            raise ContractViolation(f"{ref!r} is already forwarded to {rec.fwd!r}")
        if type(target) is not ObjRef:
            raise ContractViolation(f"forwarding target {target!r} is not a reference")
        if self.debug and self.fwd_write_allowed is not None:
            owner = self.chunks[ref[0]].owner
            if not self.fwd_write_allowed(owner):
                raise ContractViolation(
                    f"setting forwarding slot of {ref!r} without WRITE lock on heap {owner}"
                )
        rec.fwd = target

    # -- heap-level bulk operations -------------------------------------------

    def move_chunks(self, src: int, dst: int) -> int:
        """Re-own every chunk of ``src`` to ``dst``; no object moves. Returns #chunks."""
        s = self.space(src)
        d = self.space(dst)
        for ch in s.chunks:
            ch.owner = dst
        n = len(s.chunks)
        d.chunks.extend(s.chunks)
        d.occupancy += s.occupancy
        d.objects += s.objects
        s.chunks = []
        s.current = None
        s.occupancy = 0
        s.objects = 0
        return n

    def retire_chunks(self, heap: int) -> int:
        """Discard every chunk of ``heap`` (tombstone when debugging, else pool). Returns bytes freed."""
        sp = self.space(heap)
        freed = sp.occupancy
        with self._table_lock:
            for ch in sp.chunks:
                ch.owner = -1
                ch.used = 0
                if self.debug:
                    ch.retired = True
                    ch.records = None
                else:
                    ch.records = []
                    self._pool.setdefault(ch.capacity, []).append(ch)
        sp.chunks = []
        sp.current = None
        sp.occupancy = 0
        sp.objects = 0
        sp.next_size = self.min_chunk
        return freed

    def iter_objects(self, heap: int) -> Iterator[ObjRef]:
        for ch in list(self.space(heap).chunks):
            cid = ch.id
            for slot in range(len(ch.records)):
                yield ObjRef(cid, slot)

    def iter_records(self, heap: int) -> Iterator[tuple[ObjRef, Record]]:
        for ch in list(self.space(heap).chunks):
            cid = ch.id
            for slot, rec in enumerate(ch.records):
                yield ObjRef(cid, slot), rec

    def heaps(self) -> list[int]:
        return list(self._spaces)

    def live_bytes(self) -> int:
        return sum(sp.occupancy for sp in list(self._spaces.values()))
