"""Per-thread execution context: which task and which worker is running."""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Any, Iterator

_local = threading.local()


def current_task() -> Any:
    """The task running on this thread, or None outside any runtime."""
    return getattr(_local, "task", None)


def current_worker() -> int:
    return getattr(_local, "worker", -1)


def set_worker(wid: int) -> None:
    _local.worker = wid


def swap_task(task: Any) -> Any:
    prev = getattr(_local, "task", None)
    _local.task = task
    return prev


@contextmanager
def running(task: Any) -> Iterator[Any]:
    prev = swap_task(task)
    try:
        yield task
    finally:
        _local.task = prev


class HeapTask:
    """Minimal task binding used to drive memory operations without a scheduler."""

    __slots__ = ("id", "heap")

    def __init__(self, heap: int, tid: int = -1):
        self.id = tid
        self.heap = heap

    def __repr__(self) -> str:
        return f"HeapTask(heap={self.heap})"


@contextmanager
def in_heap(heap: int, tid: int = -1) -> Iterator[HeapTask]:
    """Run the body as if a task bound to ``heap`` were executing."""
    with running(HeapTask(heap, tid)) as t:
        yield t
