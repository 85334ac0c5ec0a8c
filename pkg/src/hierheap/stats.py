"""Operation-class counters and run reports.

Memory operations are classified by what they do (immutable read, mutable
read, scalar write, non-promoting or promoting reference write) and by where
the target object sits relative to the running task: local, distant or
promoted. Counters are kept per thread and merged on demand, so the hot
paths never contend.
"""

from __future__ import annotations

import enum
import json
import threading
from dataclasses import asdict, dataclass, field
from typing import Any


class OpClass(enum.IntEnum):
    READ_IMMUTABLE = 0
    READ_MUTABLE = 1
    WRITE_SCALAR = 2
    WRITE_REF_NONPROMOTING = 3
    WRITE_REF_PROMOTING = 4

    @property
    def label(self) -> str:
        return _OP_LABELS[self]


class Locality(enum.IntEnum):
    LOCAL = 0
    DISTANT = 1
    PROMOTED = 2

    @property
    def label(self) -> str:
        return self.name.capitalize()


_OP_LABELS = {
    OpClass.READ_IMMUTABLE: "ReadImmutable",
    OpClass.READ_MUTABLE: "ReadMutable",
    OpClass.WRITE_SCALAR: "WriteScalar",
    OpClass.WRITE_REF_NONPROMOTING: "WriteRefNonPromoting",
    OpClass.WRITE_REF_PROMOTING: "WriteRefPromoting",
}

N_LOC = len(Locality)
N_KEYS = len(OpClass) * N_LOC


@dataclass(frozen=True)
class OpClassKey:
    op: OpClass
    locality: Locality

    @property
    def index(self) -> int:
        return self.op * N_LOC + self.locality

    @property
    def label(self) -> str:
        return f"{self.op.label}.{self.locality.label}"

    @classmethod
    def from_index(cls, i: int) -> OpClassKey:
        return cls(OpClass(i // N_LOC), Locality(i % N_LOC))

    @classmethod
    def parse(cls, label: str) -> OpClassKey:
        op, loc = label.split(".")
        return cls(
            next(o for o in OpClass if o.label == op),
            next(l for l in Locality if l.label == loc),
        )


ALL_KEYS = [OpClassKey.from_index(i) for i in range(N_KEYS)]
# a write into a local object can never promote: the pointee is local or above
IMPOSSIBLE = {OpClassKey(OpClass.WRITE_REF_PROMOTING, Locality.LOCAL)}


class ThreadStats:
    __slots__ = (
        "counters", "locks", "op_total", "op_locks", "alloc_count", "alloc_bytes",
        "promotions", "objects_promoted", "bytes_promoted",
    )

    def __init__(self) -> None:
        self.counters = [0] * N_KEYS
        self.locks = [0] * N_KEYS
        self.op_total = 0
        self.op_locks = 0
        self.alloc_count = 0
        self.alloc_bytes = 0
        self.promotions = 0
        self.objects_promoted = 0
        self.bytes_promoted = 0


class Stats:
    """Registry of per-thread counters plus run-wide collection figures."""

    def __init__(self) -> None:
        self._tls = threading.local()
        self._all: list[ThreadStats] = []
        self._lock = threading.Lock()
        self.collections = 0
        self.objects_copied = 0
        self.bytes_copied = 0
        self.bytes_collected = 0
        self.duplicates_elided = 0
        self.gc_seconds = 0.0
        self.max_occupancy = 0

    def local(self) -> ThreadStats:
        st = getattr(self._tls, "st", None)
        if st is None:
            st = ThreadStats()
            self._tls.st = st
            with self._lock:
                self._all.append(st)
        return st

    def record_collection(self, report: Any, seconds: float) -> None:
        with self._lock:
            self.collections += 1
            self.objects_copied += report.objects_copied
            self.bytes_copied += report.bytes_copied
            self.bytes_collected += report.bytes_freed
            self.duplicates_elided += report.duplicates_elided
            self.gc_seconds += seconds

    def sample_occupancy(self, live_bytes: int) -> None:
        if live_bytes > self.max_occupancy:
            with self._lock:
                if live_bytes > self.max_occupancy:
                    self.max_occupancy = live_bytes

    def merged(self) -> ThreadStats:
        out = ThreadStats()
        with self._lock:
            parts = list(self._all)
        for st in parts:
            for i in range(N_KEYS):
                out.counters[i] += st.counters[i]
                out.locks[i] += st.locks[i]
            out.op_total += st.op_total
            out.alloc_count += st.alloc_count
            out.alloc_bytes += st.alloc_bytes
            out.promotions += st.promotions
            out.objects_promoted += st.objects_promoted
            out.bytes_promoted += st.bytes_promoted
        return out

    def count(self, op: OpClass, loc: Locality) -> int:
        return self.merged().counters[op * N_LOC + loc]

    def report(self, *, wall_time: float = 0.0, workers: int = 1, **extra: Any) -> StatsReport:
        m = self.merged()
        counters = {k.label: m.counters[k.index] for k in ALL_KEYS if k not in IMPOSSIBLE}
        locks_by_class = {k.label: m.locks[k.index] for k in ALL_KEYS if k not in IMPOSSIBLE}
        locks_by_op = {op.label: 0 for op in OpClass}
        for k in ALL_KEYS:
            locks_by_op[k.op.label] += m.locks[k.index]
        # a local promoting write would be a classification bug; surface it
        if m.counters[OpClassKey(OpClass.WRITE_REF_PROMOTING, Locality.LOCAL).index]:
            counters["WriteRefPromoting.Local"] = m.counters[
                OpClassKey(OpClass.WRITE_REF_PROMOTING, Locality.LOCAL).index
            ]
        busy = wall_time * max(workers, 1)
        frac = min(1.0, self.gc_seconds / busy) if busy > 0 else 0.0
        return StatsReport(
            counters=counters,
            promotions=m.promotions,
            objects_promoted=m.objects_promoted,
            bytes_promoted=m.bytes_promoted,
            collections=self.collections,
            objects_collected=self.objects_copied,
            bytes_collected=self.bytes_collected,
            duplicates_elided=self.duplicates_elided,
            max_occupancy=self.max_occupancy,
            wall_time=wall_time,
            workers=workers,
            collection_time_fraction=frac,
            lock_acquisitions=locks_by_op,
            lock_acquisitions_by_class=locks_by_class,
            memops_total=m.op_total,
            allocations=m.alloc_count,
            bytes_allocated=m.alloc_bytes,
            **extra,
        )


@dataclass
class StatsReport:
    counters: dict[str, int]
    promotions: int = 0
    objects_promoted: int = 0
    bytes_promoted: int = 0
    collections: int = 0
    objects_collected: int = 0
    bytes_collected: int = 0
    duplicates_elided: int = 0
    max_occupancy: int = 0
    wall_time: float = 0.0
    collection_time_fraction: float = 0.0
    lock_acquisitions: dict[str, int] = field(default_factory=dict)
    lock_acquisitions_by_class: dict[str, int] = field(default_factory=dict)
    memops_total: int = 0
    allocations: int = 0
    bytes_allocated: int = 0
    benchmark: str = ""
    size: int = 0
    grain: int = 0
    workers: int = 1
    seed: int = 0
    tasks: int = 0
    steals: int = 0
    audits: int = 0
    audit_passed: bool = True
    verified: bool = True
    result: str = ""

    def counter(self, op: OpClass, loc: Locality) -> int:
        return self.counters.get(OpClassKey(op, loc).label, 0)

    def dominant_write_class(self) -> str:
        writes = {
            k: v for k, v in self.counters.items()
            if k.startswith("WriteScalar") or k.startswith("WriteRef")
        }
        return max(writes, key=lambda k: writes[k])

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, dict):
                for sub, v in value.items():
                    lines.append(f"{key}.{sub} = {_fmt(v)}")
            else:
                lines.append(f"{key} = {_fmt(value)}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {"schema": "hh-stats", "version": 1, **asdict(self)}
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> StatsReport:
        doc = json.loads(text)
        doc.pop("schema", None)
        doc.pop("version", None)
        return cls(**doc)


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
