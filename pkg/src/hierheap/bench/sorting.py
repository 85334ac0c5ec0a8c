"""Merge-sort family: msort (imperative leaves), msort-pure, dedup.

Below the grain, ``msort`` copies its rope leaf into a fresh mutable array
and quick-sorts it in place; merges write into a fresh mutable array. All of
those writes hit objects the running task just allocated, so they are local
non-pointer writes. ``msort-pure`` does the same work with immutable arrays
built from initial values only.
"""

from __future__ import annotations

from ..objects import SCALAR_MUT, ObjectLayout, ObjRef
from . import seq

_INSERTION = 16


def mut_array(rt, values: list) -> ObjRef:
    return rt.alloc(ObjectLayout.array(len(values), SCALAR_MUT), values)


def arity(rt, a: ObjRef) -> int:
    return rt.store.chunks[a[0]].records[a[1]].layout.arity


def quicksort_inplace(rt, a: ObjRef, lo: int, hi: int) -> None:
    """Sort ``a[lo..hi]`` (both ends inclusive) in place using only memory operations."""
    rd = rt.read_mutable
    wr = rt.write_nonptr
    stack = [(lo, hi)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < _INSERTION:
            for i in range(lo + 1, hi + 1):
                x = rd(a, i)
                j = i - 1
                while j >= lo:
                    y = rd(a, j)
                    if y <= x:
                        break
                    wr(a, j + 1, y)
                    j -= 1
                wr(a, j + 1, x)
            continue
        mid = (lo + hi) // 2
        p = sorted((rd(a, lo), rd(a, mid), rd(a, hi)))[1]
        i, j = lo, hi
        while i <= j:
            while rd(a, i) < p:
                i += 1
            while rd(a, j) > p:
                j -= 1
            if i <= j:
                x, y = rd(a, i), rd(a, j)
                wr(a, i, y)
                wr(a, j, x)
                i += 1
                j -= 1
        if lo < j:
            stack.append((lo, j))
        if i < hi:
            stack.append((i, hi))


def merge_arrays(rt, a: ObjRef, b: ObjRef, dedup: bool = False) -> ObjRef:
    rd = rt.read_mutable
    na, nb = arity(rt, a), arity(rt, b)
    if dedup:
        # first pass counts the survivors so the output has its exact size
        n, i, j, last = 0, 0, 0, None
        while i < na or j < nb:
            if j >= nb or (i < na and rd(a, i) <= rd(b, j)):
                x = rd(a, i)
                i += 1
            else:
                x = rd(b, j)
                j += 1
            if x != last:
                n += 1
                last = x
    else:
        n = na + nb
    out = mut_array(rt, [0] * n)
    wr = rt.write_nonptr
    i = j = k = 0
    last = None
    while i < na or j < nb:
        if j >= nb or (i < na and rd(a, i) <= rd(b, j)):
            x = rd(a, i)
            i += 1
        else:
            x = rd(b, j)
            j += 1
        if dedup and x == last:
            continue
        wr(out, k, x)
        k += 1
        last = x
    return out


def msort(rt, s: ObjRef) -> ObjRef:
    if seq.tag(rt, s) != seq.NODE:
        a = mut_array(rt, seq.leaf_items(rt, s))
        quicksort_inplace(rt, a, 0, arity(rt, a) - 1)
        return a
    l, r = seq.children(rt, s)
    a, b = rt.fork_join(lambda: msort(rt, l), lambda: msort(rt, r))
    return merge_arrays(rt, a, b)


def _hash_unique(rt, xs: list) -> ObjRef:
    """Insert ``xs`` into a local open-addressing set; return the distinct keys as a mutable array."""
    size = 1
    while size < 2 * max(1, len(xs)):
        size *= 2
    mask = size - 1
    table = mut_array(rt, [-1] * size)
    rd = rt.read_mutable
    wr = rt.write_nonptr
    uniq = []
    for x in xs:
        h = seq.mix(x) & mask
        while True:
            v = rd(table, h)
            if v == -1:
                wr(table, h, x)
                uniq.append(x)
                break
            if v == x:
                break
            h = (h + 1) & mask
    return mut_array(rt, uniq)


def dedup(rt, s: ObjRef) -> ObjRef:
    if seq.tag(rt, s) != seq.NODE:
        a = _hash_unique(rt, seq.leaf_items(rt, s))
        quicksort_inplace(rt, a, 0, arity(rt, a) - 1)
        return a
    l, r = seq.children(rt, s)
    a, b = rt.fork_join(lambda: dedup(rt, l), lambda: dedup(rt, r))
    return merge_arrays(rt, a, b, dedup=True)


def pure_quicksort(xs: list) -> list:
    out: list = []
    stack = [(False, xs)]
    # explicit stack: (done, items); done entries are emitted verbatim
    while stack:
        done, items = stack.pop()
        if done or len(items) <= 1:
            out.extend(items)
            continue
        p = items[len(items) // 2]
        lt = [x for x in items if x < p]
        eq = [x for x in items if x == p]
        gt = [x for x in items if x > p]
        stack.append((False, gt))
        stack.append((True, eq))
        stack.append((False, lt))
    return out


def _pure_merge(xs: list, ys: list) -> list:
    out = []
    i = j = 0
    while i < len(xs) and j < len(ys):
        if xs[i] <= ys[j]:
            out.append(xs[i])
            i += 1
        else:
            out.append(ys[j])
            j += 1
    out.extend(xs[i:])
    out.extend(ys[j:])
    return out


def msort_pure(rt, s: ObjRef) -> ObjRef:
    if seq.tag(rt, s) != seq.NODE:
        return seq.make_leaf(rt, pure_quicksort(seq.leaf_items(rt, s)))
    l, r = seq.children(rt, s)
    a, b = rt.fork_join(lambda: msort_pure(rt, l), lambda: msort_pure(rt, r))
    return seq.make_leaf(rt, _pure_merge(seq.leaf_items(rt, a), seq.leaf_items(rt, b)))
