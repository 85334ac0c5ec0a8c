from __future__ import annotations

import pytest

from hierheap import (
    REF_IMM, REF_MUT, SCALAR_IMM, SCALAR_MUT, Cell, ContractViolation, ObjectLayout, Runtime, RuntimeConfig,
)
from hierheap.bench.basic import fib, fib_seq

from hhtest import master, run_program

CONS = ObjectLayout([SCALAR_IMM, REF_IMM])
BOX = ObjectLayout([REF_MUT])
CELL = ObjectLayout([SCALAR_MUT])


def fib_oracle(n: int) -> int:
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


@pytest.mark.parametrize("workers", [1, 2, 4, 8])
@pytest.mark.parametrize("deterministic", [False, True])
def test_fib(workers, deterministic):
    rt = Runtime(RuntimeConfig(workers=workers, deterministic=deterministic, seed=3, audit="joins"))
    assert rt.run(fib, rt, 18, 8) == fib_oracle(18)
    assert rt.audit_passed and rt.audits > 0
    assert fib_seq(18) == fib_oracle(18)


def test_config_validation():
    with pytest.raises(ValueError):
        RuntimeConfig(workers=0)
    with pytest.raises(ValueError):
        RuntimeConfig(audit="sometimes")
    with pytest.raises(ValueError):
        RuntimeConfig(preempt=2.0)


def test_fork_join_needs_a_task():
    rt = Runtime()
    with pytest.raises(ContractViolation):
        rt.fork_join(lambda: 1, lambda: 2)
    with pytest.raises(ContractViolation):
        rt.current_task()


def list_of(rt, lo, hi, grain):
    """Cons list lo..hi-1 built by fork/join, so cells come from many heaps."""
    if hi - lo <= grain:
        acc = None
        for i in reversed(range(lo, hi)):
            acc = rt.alloc(CONS, [i, acc])
        return acc
    mid = (lo + hi) // 2
    a, b = rt.fork_join(lambda: list_of(rt, lo, mid, grain), lambda: list_of(rt, mid, hi, grain))
    # append b after a by copying a's spine
    items = []
    cur = a
    while cur is not None:
        items.append(rt.read_immutable(cur, 0))
        cur = rt.read_immutable(cur, 1)
    acc = b
    for x in reversed(items):
        acc = rt.alloc(CONS, [x, acc])
    return acc


def walk(store, ref):
    out = []
    while ref is not None:
        out.append(store.get_field_raw(ref, 0))
        ref = store.get_field_raw(ref, 1)
    return out


@pytest.mark.parametrize("workers", [1, 4])
def test_heaps_join_into_parent(workers):
    rt = Runtime(RuntimeConfig(workers=workers, seed=1, gc_threshold=None, audit="joins"))
    head = rt.run(list_of, rt, 0, 200, 16)
    assert walk(rt.store, head) == list(range(200))
    assert rt.hierarchy.live_heaps() == [rt.hierarchy.root]
    assert rt.store.heap_of(head) == rt.hierarchy.root
    assert rt.audit_passed


def test_exceptions_propagate_from_either_branch():
    rt = Runtime(RuntimeConfig(workers=2, seed=0))

    def boom():
        raise KeyError("f")

    with pytest.raises(KeyError):
        rt.run(lambda: rt.fork_join(boom, lambda: 1))
    rt = Runtime(RuntimeConfig(workers=2, seed=0))
    with pytest.raises(ZeroDivisionError):
        rt.run(lambda: rt.fork_join(lambda: 1, lambda: 1 / 0))


def test_deterministic_replay():
    def go(seed):
        rt = Runtime(RuntimeConfig(workers=4, seed=seed, deterministic=True, audit="joins", preempt=0.05))
        r = rt.run(fib, rt, 16, 4)
        return r, list(rt.steal_log), rt.report().counters

    a, b = go(7), go(7)
    assert a == b
    assert a[1], "expected some steals with four workers"
    assert go(8)[1] != a[1]


def test_join_records_live_in_global_heap_only_on_steal():
    rt = Runtime(RuntimeConfig(workers=4, seed=2, deterministic=True))
    rt.run(fib, rt, 15, 4)
    g = rt.global_heap
    recs = list(rt.store.iter_records(g))
    assert len(recs) == len(rt.steal_log) > 0
    # every join record counted down to zero, tagged with its thief
    thieves = [t for t, _, _ in rt.steal_log]
    assert [r.values for _, r in recs] == [[0, t] for t in thieves]
    one = Runtime(RuntimeConfig(workers=1))
    one.run(fib, one, 15, 4)
    assert list(one.store.iter_records(one.global_heap)) == []


def test_safepoint_collection_preserves_results():
    cfg = RuntimeConfig(workers=1, gc_threshold=2048, audit="joins")
    rt = Runtime(cfg)
    head = rt.run(list_of, rt, 0, 600, 32)
    assert walk(rt.store, head) == list(range(600))
    rep = rt.report()
    assert rep.collections > 0 and rep.bytes_collected > 0
    assert rt.audit_passed


def test_safepoint_collection_multiworker():
    rt = Runtime(RuntimeConfig(workers=4, seed=5, gc_threshold=2048, audit="joins"))
    head = rt.run(list_of, rt, 0, 600, 32)
    assert walk(rt.store, head) == list(range(600))
    assert rt.report().collections > 0 and rt.audit_passed


def test_registered_roots_survive_collection():
    rt = Runtime(RuntimeConfig(workers=1, gc_threshold=1024))

    def body():
        def child():
            keep = rt.alloc(CELL, [41])
            cell = Cell(keep)
            rid = rt.register_root(cell)
            for i in range(400):
                rt.alloc(CELL, [i])
            return cell, rid

        (cell, rid), _ = rt.fork_join(child, lambda: None)
        return cell, rid

    cell, rid = rt.run(body)
    assert rt.report().collections >= 1
    assert rt.store.get_field_raw(cell.value, 0) == 41
    rt.unregister_root(rid)


def test_every_op_audit():
    rt = run_program(12345, workers=3, audit="every-op")
    assert rt.audit_passed
    assert rt.audits >= rt.report().memops_total


def test_audit_catches_injected_down_pointer():
    rt = Runtime(RuntimeConfig(workers=1, audit="off"))

    def body():
        holder = rt.alloc(BOX, [None])

        def child():
            x = rt.alloc(CELL, [1])
            rt.store.set_field_raw(holder, 0, x)  # bypasses write_ptr
            return rt.audit()

        rep, _ = rt.fork_join(child, lambda: None)
        return rep

    rep = rt.run(body)
    assert len(rep.down_refs) == 1 and not rt.audit_passed


def test_promotion_across_tasks():
    rt = Runtime(RuntimeConfig(workers=2, seed=4, audit="joins", gc_threshold=None))

    def body():
        holder = rt.alloc(BOX, [None])

        def child():
            x = rt.alloc(CELL, [5])
            rt.write_ptr(holder, 0, x)
            rt.write_nonptr(x, 0, 6)  # stale copy; lands on the master too
            return x

        x, _ = rt.fork_join(child, lambda: None)
        return holder, x

    holder, x = rt.run(body)
    m = rt.store.get_field_raw(holder, 0)
    assert master(rt.store, x) == m
    assert rt.store.get_field_raw(m, 0) == 6
    assert rt.report().promotions == 1 and rt.audit_passed
