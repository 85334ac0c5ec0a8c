"""Parallel sequences as ropes living in the hierarchical heap.

A rope is either a leaf holding at most ``grain`` elements or an internal
node with two children and a cached length. All rope objects are immutable
and built with initial values only, so pure code over ropes never writes a
pointer after allocation.

    leaf:  [tag=LEAF, x0, x1, ...]            scalars, immutable
    rleaf: [tag=RLEAF, r0, r1, ...]           references, immutable
    node:  [tag=NODE, length, left, right]
"""

from __future__ import annotations

from functools import lru_cache
from typing import Any, Callable

from ..objects import REF_IMM, SCALAR_IMM, ObjectLayout, ObjRef

LEAF, RLEAF, NODE = 0, 1, 2

NODE_LAYOUT = ObjectLayout([SCALAR_IMM, SCALAR_IMM, REF_IMM, REF_IMM])

_MASK = (1 << 64) - 1


def mix(i: int, seed: int = 0) -> int:
    """Deterministic 31-bit pseudo-random value for index ``i`` (splitmix64 finaliser)."""
    z = (i + 0x9E3779B97F4A7C15 * (seed + 1)) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & 0x7FFFFFFF


@lru_cache(maxsize=None)
def leaf_layout(k: int) -> ObjectLayout:
    return ObjectLayout([SCALAR_IMM] * (k + 1))


@lru_cache(maxsize=None)
def rleaf_layout(k: int) -> ObjectLayout:
    return ObjectLayout([SCALAR_IMM] + [REF_IMM] * k)


def make_leaf(rt, xs: list) -> ObjRef:
    return rt.alloc(leaf_layout(len(xs)), [LEAF, *xs])


def make_rleaf(rt, refs: list) -> ObjRef:
    return rt.alloc(rleaf_layout(len(refs)), [RLEAF, *refs])


def make_node(rt, left: ObjRef, right: ObjRef) -> ObjRef:
    n = length(rt, left) + length(rt, right)
    return rt.alloc(NODE_LAYOUT, [NODE, n, left, right])


def tag(rt, s: ObjRef) -> int:
    return rt.read_immutable(s, 0)


def length(rt, s: ObjRef) -> int:
    if rt.read_immutable(s, 0) == NODE:
        return rt.read_immutable(s, 1)
    return rt.store.chunks[s[0]].records[s[1]].layout.arity - 1


def leaf_items(rt, s: ObjRef) -> list:
    n = length(rt, s)
    rd = rt.read_immutable
    return [rd(s, i) for i in range(1, n + 1)]


def children(rt, s: ObjRef) -> tuple[ObjRef, ObjRef]:
    return rt.read_immutable(s, 2), rt.read_immutable(s, 3)


def tabulate(rt, n: int, f: Callable[[int], Any], grain: int, lo: int = 0) -> ObjRef:
    """Rope of ``f(lo) .. f(lo + n - 1)`` built by divide and conquer."""
    if n <= grain:
        return make_leaf(rt, [f(i) for i in range(lo, lo + n)])
    h = n // 2
    a, b = rt.fork_join(
        lambda: tabulate(rt, h, f, grain, lo),
        lambda: tabulate(rt, n - h, f, grain, lo + h),
    )
    return make_node(rt, a, b)


def map_seq(rt, s: ObjRef, f: Callable[[Any], Any]) -> ObjRef:
    if tag(rt, s) != NODE:
        return make_leaf(rt, [f(x) for x in leaf_items(rt, s)])
    l, r = children(rt, s)
    a, b = rt.fork_join(lambda: map_seq(rt, l, f), lambda: map_seq(rt, r, f))
    return make_node(rt, a, b)


def reduce_seq(rt, s: ObjRef, op: Callable[[Any, Any], Any], zero: Any) -> Any:
    if tag(rt, s) != NODE:
        acc = zero
        for x in leaf_items(rt, s):
            acc = op(acc, x)
        return acc
    l, r = children(rt, s)
    a, b = rt.fork_join(lambda: reduce_seq(rt, l, op, zero), lambda: reduce_seq(rt, r, op, zero))
    return op(a, b)


def filter_seq(rt, s: ObjRef, pred: Callable[[Any], bool]) -> ObjRef:
    if tag(rt, s) != NODE:
        return make_leaf(rt, [x for x in leaf_items(rt, s) if pred(x)])
    l, r = children(rt, s)
    a, b = rt.fork_join(lambda: filter_seq(rt, l, pred), lambda: filter_seq(rt, r, pred))
    return make_node(rt, a, b)


# -- raw inspection (no memop accounting) -------------------------------------------


def master_field(store, ref: ObjRef, i: int) -> Any:
    """Field ``i`` of the master copy of ``ref``, read without instrumentation."""
    rec = store.record(ref)
    while rec.fwd is not None:
        rec = store.record(rec.fwd)
    return rec.values[i]


def master_values(store, ref: ObjRef) -> list:
    rec = store.record(ref)
    while rec.fwd is not None:
        rec = store.record(rec.fwd)
    return list(rec.values)


def to_list(store, s: ObjRef) -> list:
    """Flatten a rope by raw reads; used by verification oracles."""
    out: list = []
    stack = [s]
    while stack:
        cur = stack.pop()
        rec = store.record(cur)
        vals = rec.values
        if vals[0] == NODE:
            stack.append(vals[3])
            stack.append(vals[2])
        else:
            out.extend(vals[1:])
    return out
