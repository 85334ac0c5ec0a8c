from __future__ import annotations

import random
import threading

import pytest

from hierheap import (
    REF_IMM, REF_MUT, SCALAR_IMM, SCALAR_MUT, ContractViolation, EntanglementError, HeapHierarchy,
    HookedMemOps, Locality, MemOps, ObjectLayout, OpClass, OpClassKey, in_heap,
)

from hhtest import canonical_form, master

PAIR = ObjectLayout([SCALAR_MUT, REF_MUT])
BOX = ObjectLayout([REF_MUT])
IMM = ObjectLayout([SCALAR_IMM, REF_IMM])


def setup():
    h = HeapHierarchy()
    a = h.new_child_heap(h.root)
    b = h.new_child_heap(h.root)
    a1 = h.new_child_heap(a)
    return h, MemOps(h), a, b, a1


def count(ops, op, loc):
    return ops.stats.count(op, loc)


def locks(ops, op, loc):
    return ops.stats.merged().locks[OpClassKey(op, loc).index]


def test_ops_outside_task_rejected():
    _, ops, *_ = setup()
    with pytest.raises(ContractViolation):
        ops.alloc(PAIR, [0, None])


def test_locality_classification_and_lock_counts():
    h, ops, a, b, a1 = setup()
    with in_heap(a):
        x = ops.alloc(PAIR, [1, None])
        ops.write_nonptr(x, 0, 2)
        assert ops.read_mutable(x, 0) == 2
        y = ops.alloc(IMM, [9, x])
        assert ops.read_immutable(y, 0) == 9
    with in_heap(a1):
        assert ops.read_mutable(x, 0) == 2
        ops.write_nonptr(x, 0, 3)
        assert ops.read_immutable(y, 1) == x
    L, D = Locality.LOCAL, Locality.DISTANT
    assert count(ops, OpClass.WRITE_SCALAR, L) == 1
    assert count(ops, OpClass.WRITE_SCALAR, D) == 1
    assert count(ops, OpClass.READ_MUTABLE, L) == 1
    assert count(ops, OpClass.READ_MUTABLE, D) == 1
    assert count(ops, OpClass.READ_IMMUTABLE, L) == 1
    assert count(ops, OpClass.READ_IMMUTABLE, D) == 1
    for op in OpClass:
        for loc in Locality:
            # unforwarded objects never need a lock for reads and scalar writes
            if op is not OpClass.WRITE_REF_PROMOTING:
                assert locks(ops, op, loc) == 0


def test_field_kind_contracts():
    h, ops, a, *_ = setup()
    with in_heap(a):
        x = ops.alloc(PAIR, [1, None])
        y = ops.alloc(IMM, [1, None])
        with pytest.raises(ContractViolation):
            ops.read_immutable(x, 0)
        with pytest.raises(ContractViolation):
            ops.read_mutable(y, 0)
        with pytest.raises(ContractViolation):
            ops.write_nonptr(x, 1, 5)
        with pytest.raises(ContractViolation):
            ops.write_nonptr(x, 0, x)
        with pytest.raises(ContractViolation):
            ops.write_ptr(x, 0, x)
        with pytest.raises(ContractViolation):
            ops.write_ptr(y, 1, x)
        with pytest.raises(ContractViolation):
            ops.write_ptr(x, 1, 7)
        with pytest.raises(ContractViolation):
            ops.read_mutable(x, 5)
        with pytest.raises(ContractViolation):
            ops.read_mutable((1, 2, 3), 0)


def test_entangling_writes_rejected():
    h, ops, a, b, a1 = setup()
    with in_heap(a1):
        deep = ops.alloc(PAIR, [0, None])
    with in_heap(b):
        other = ops.alloc(PAIR, [0, None])
    with in_heap(a):
        x = ops.alloc(PAIR, [0, None])
        with pytest.raises(EntanglementError):
            ops.write_ptr(x, 1, deep)  # down-pointer
        with pytest.raises(EntanglementError):
            ops.write_ptr(x, 1, other)  # cross-pointer


def test_nonpromoting_distant_write():
    h, ops, a, b, a1 = setup()
    with in_heap(a):
        x = ops.alloc(PAIR, [0, None])
        y = ops.alloc(PAIR, [0, None])
    with in_heap(a1):
        ops.write_ptr(x, 1, y)  # same depth as x's heap: no promotion
    assert h.store.get_field_raw(x, 1) == y
    assert count(ops, OpClass.WRITE_REF_NONPROMOTING, Locality.DISTANT) == 1
    assert ops.stats.merged().promotions == 0


def test_promoting_write_copies_reachable_graph():
    h, ops, a, b, a1 = setup()
    with in_heap(h.root):
        holder = ops.alloc(BOX, [None])
    with in_heap(a):
        shared = ops.alloc(PAIR, [5, None])
    with in_heap(a1):
        n1 = ops.alloc(PAIR, [1, shared])
        n2 = ops.alloc(PAIR, [2, n1])
        ops.write_ptr(n1, 1, n2)  # cycle n1 <-> n2, previously pointing at shared
        before = canonical_form(h.store, [n2])
        ops.write_ptr(holder, 0, n2)
    st = ops.stats.merged()
    assert st.promotions == 1
    assert st.objects_promoted == 2
    assert count(ops, OpClass.WRITE_REF_PROMOTING, Locality.DISTANT) == 1
    stored = h.store.get_field_raw(holder, 0)
    assert h.store.heap_of(stored) == h.root
    assert master(h.store, n2) == stored
    assert h.store.has_fwd(n1) and h.store.has_fwd(n2)
    assert canonical_form(h.store, [stored]) == before
    # copies point at copies, never back into the deeper heap
    m1 = h.store.get_field_raw(stored, 1)
    assert h.store.heap_of(m1) == h.root and h.store.get_field_raw(m1, 1) == stored
    assert h.order_violations == []


def test_forwarded_ops_use_master():
    h, ops, a, b, a1 = setup()
    with in_heap(h.root):
        holder = ops.alloc(BOX, [None])
    with in_heap(a1):
        x = ops.alloc(PAIR, [1, None])
        ops.write_ptr(holder, 0, x)
        ops.write_nonptr(x, 0, 42)  # through the stale copy
        assert ops.read_mutable(x, 0) == 42
        assert ops.compare_and_swap(x, 0, 42, 43)
        assert not ops.compare_and_swap(x, 0, 42, 44)
    m = master(h.store, x)
    assert m != x and h.store.get_field_raw(m, 0) == 43
    P = Locality.PROMOTED
    assert count(ops, OpClass.WRITE_SCALAR, P) == 3
    assert count(ops, OpClass.READ_MUTABLE, P) == 1
    # one READ lock on the master's heap per forwarded operation
    assert locks(ops, OpClass.WRITE_SCALAR, P) == 3
    assert locks(ops, OpClass.READ_MUTABLE, P) == 1


def test_repeated_promotion_allocates_nothing():
    h, ops, a, b, a1 = setup()
    with in_heap(h.root):
        holder = ops.alloc(ObjectLayout([REF_MUT, REF_MUT]), [None, None])
    with in_heap(a1):
        x = ops.alloc(PAIR, [1, None])
        ops.write_ptr(holder, 0, x)
        before = h.store.live_bytes()
        ops.write_ptr(holder, 1, x)
        assert h.store.live_bytes() == before
    assert h.store.get_field_raw(holder, 0) == h.store.get_field_raw(holder, 1)
    assert ops.stats.merged().objects_promoted == 1


def test_find_master_handle():
    h, ops, a, *_ = setup()
    with in_heap(a):
        x = ops.alloc(PAIR, [1, None])
        with ops.find_master(x) as mh:
            assert mh.obj == x and h.heap(a).lock.readers == 1
        assert h.heap(a).lock.idle()
        with pytest.raises(ContractViolation):
            mh.release()


def test_local_cas_is_atomic_under_threads():
    h, ops, a, *_ = setup()
    with in_heap(a):
        x = ops.alloc(ObjectLayout([SCALAR_MUT]), [0])

    def bump():
        with in_heap(a):
            for _ in range(2000):
                while True:
                    v = ops.read_mutable(x, 0)
                    if ops.compare_and_swap(x, 0, v, v + 1):
                        break

    ts = [threading.Thread(target=bump) for _ in range(4)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert h.store.get_field_raw(x, 0) == 8000


def test_writes_racing_a_promotion_are_not_lost():
    """One thread promotes while another keeps writing through the stale copy."""
    for seed in range(20):
        h, ops, a, b, a1 = setup()
        with in_heap(h.root):
            holder = ops.alloc(BOX, [None])
        with in_heap(a1):
            x = ops.alloc(ObjectLayout([SCALAR_MUT, SCALAR_MUT]), [0, 0])
        rng = random.Random(seed)
        n = 3000
        start = threading.Barrier(2)

        def writer():
            with in_heap(a1):
                start.wait()
                for _ in range(n):
                    ops.write_nonptr(x, 0, ops.read_mutable(x, 0) + 1)

        def promoter():
            with in_heap(a1):
                start.wait()
                for _ in range(rng.randrange(200)):
                    ops.read_mutable(x, 1)
                ops.write_ptr(holder, 0, x)

        ts = [threading.Thread(target=writer), threading.Thread(target=promoter)]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
        assert h.store.get_field_raw(master(h.store, x), 0) == n


def test_hooked_memops_brackets_every_op():
    h = HeapHierarchy()
    calls = []

    class Hook:
        def before(self):
            calls.append("b")

        def after(self):
            calls.append("a")

    ops = HookedMemOps(h, hook=Hook())
    with in_heap(h.root):
        x = ops.alloc(PAIR, [0, None])
        ops.write_nonptr(x, 0, 1)
        ops.read_mutable(x, 0)
        ops.write_ptr(x, 1, x)
        ops.compare_and_swap(x, 0, 1, 2)
    assert calls == ["b", "a"] * 5
