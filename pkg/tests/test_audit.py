from __future__ import annotations

from hierheap import (
    REF_MUT, SCALAR_MUT, WRITE, HeapHierarchy, MemOps, ObjectLayout, audit_all, audit_disentanglement,
    audit_forwarding_chains, forwarding_chain, in_heap,
)

NODE = ObjectLayout([SCALAR_MUT, REF_MUT])


def setup():
    h = HeapHierarchy()
    a = h.new_child_heap(h.root)
    b = h.new_child_heap(h.root)
    return h, MemOps(h), a, b


def test_clean_store_passes():
    h, ops, a, b = setup()
    with in_heap(h.root):
        r = ops.alloc(NODE, [0, None])
    with in_heap(a):
        x = ops.alloc(NODE, [0, r])
        ops.write_ptr(x, 1, x)
    rep = audit_all(h)
    assert rep.passed and rep.objects_scanned == 2
    assert "down_refs=0" in rep.summary()


def test_injected_down_and_cross_refs_are_reported():
    h, ops, a, b = setup()
    s = h.store
    r = s.fresh_obj(h.root, NODE, [0, None])
    x = s.fresh_obj(a, NODE, [0, None])
    y = s.fresh_obj(b, NODE, [0, None])
    s.set_field_raw(r, 1, x)  # root -> a: down
    s.set_field_raw(x, 1, y)  # a -> b: cross
    rep = audit_disentanglement(h)
    assert rep.down_refs == [(r, 1, x)]
    assert rep.cross_refs == [(x, 1, y)]
    assert not rep.passed
    # scope restricts the source heaps
    assert audit_disentanglement(h, [b]).passed


def test_global_heap_refs_are_cross():
    h, ops, a, b = setup()
    g = h.new_global_heap()
    s = h.store
    x = s.fresh_obj(a, NODE, [0, None])
    z = s.fresh_obj(g, NODE, [0, None])
    s.set_field_raw(x, 1, z)
    assert audit_disentanglement(h).cross_refs == [(x, 1, z)]


def test_dangling_ref_is_reported():
    h, ops, a, b = setup()
    s = h.store
    x = s.fresh_obj(a, NODE, [0, None])
    dead = s.fresh_obj(b, NODE, [0, None])
    s.set_field_raw(x, 1, dead)
    s.retire_chunks(b)
    assert audit_disentanglement(h).cross_refs == [(x, 1, dead)]


def test_forwarding_chain_audit():
    h, ops, a, b = setup()
    with in_heap(h.root):
        holder = ops.alloc(NODE, [0, None])
    with in_heap(a):
        x = ops.alloc(NODE, [0, None])
        ops.write_ptr(holder, 1, x)
    chain = forwarding_chain(h, x)
    assert len(chain) == 2 and chain[1] == h.store.get_field_raw(holder, 1)
    assert audit_forwarding_chains(h).passed

    # a chain that points sideways is broken
    y = h.store.fresh_obj(a, NODE, [0, None])
    z = h.store.fresh_obj(b, NODE, [0, None])
    h.lock(a, WRITE)
    h.store.set_fwd(y, z)
    h.unlock(a)
    assert audit_forwarding_chains(h).broken_chains == [y]


def test_forwarding_cycle_is_broken():
    h, ops, a, b = setup()
    s = h.store
    x = s.fresh_obj(h.root, NODE, [0, None])
    y = s.fresh_obj(h.root, NODE, [0, None])
    s.record(x).fwd = y
    s.record(y).fwd = x
    assert set(audit_forwarding_chains(h).broken_chains) == {x, y}
    assert forwarding_chain(h, x) == [x, y]
