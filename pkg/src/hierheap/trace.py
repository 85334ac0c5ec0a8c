"""Event tracing.

Trace schema ``hh-trace`` version 1: newline-delimited JSON. The first line
is a header ``{"schema": "hh-trace", "version": 1, "fields": [...]}``; every
following line is one event object whose keys appear in this order:

    ts       monotonic nanoseconds
    worker   worker index (-1 outside the scheduler)
    task     task id (-1 outside any task)
    event    one of EVENTS
    subject  "obj:<chunk>:<slot>" or "heap:<id>" or "" when not applicable
    opClass  "<Op>.<Locality>" for memory operations, "" otherwise

Events are buffered per thread and merged by timestamp when written.
"""

from __future__ import annotations

import json
import threading
import time
from typing import IO, Any, Iterable

from . import context

SCHEMA = "hh-trace"
VERSION = 1
FIELDS = ("ts", "worker", "task", "event", "subject", "opClass")
EVENTS = frozenset({
    "alloc", "readImm", "readMut", "writeScalar", "writeRef", "promoteStart",
    "promoteEnd", "lock", "unlock", "collectStart", "collectEnd", "fork", "join", "steal",
})


def obj_subject(ref: Any) -> str:
    return f"obj:{ref[0]}:{ref[1]}" if ref is not None else ""


def heap_subject(h: Any) -> str:
    return f"heap:{h}"


class Tracer:
    def __init__(self) -> None:
        self._tls = threading.local()
        self._buffers: list[list[tuple]] = []
        self._lock = threading.Lock()

    def _buf(self) -> list[tuple]:
        buf = getattr(self._tls, "buf", None)
        if buf is None:
            buf = self._tls.buf = []
            with self._lock:
                self._buffers.append(buf)
        return buf

    def emit(self, event: str, subject: str = "", op_class: str = "") -> None:
        task = context.current_task()
        self._buf().append((
            time.monotonic_ns(),
            context.current_worker(),
            getattr(task, "id", -1) if task is not None else -1,
            event,
            subject,
            op_class,
        ))

    def records(self) -> list[dict[str, Any]]:
        with self._lock:
            rows = [r for buf in self._buffers for r in buf]
        rows.sort(key=lambda r: r[0])
        return [dict(zip(FIELDS, r)) for r in rows]

    def write(self, sink: IO[str]) -> int:
        recs = self.records()
        sink.write(json.dumps({"schema": SCHEMA, "version": VERSION, "fields": list(FIELDS)}) + "\n")
        for r in recs:
            sink.write(json.dumps(r) + "\n")
        return len(recs)


def read_trace(lines: Iterable[str]) -> list[dict[str, Any]]:
    it = iter(lines)
    header = json.loads(next(it))
    if header.get("schema") != SCHEMA or header.get("version") != VERSION:
        raise ValueError(f"unsupported trace header {header!r}")
    out = []
    for line in it:
        line = line.strip()
        if line:
            rec = json.loads(line)
            if list(rec) != list(FIELDS):
                raise ValueError(f"trace record fields out of order: {list(rec)}")
            out.append(rec)
    return out
