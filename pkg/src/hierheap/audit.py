"""Invariant auditors: disentanglement and forwarding-chain shape.

Both scan the store directly and assume the scanned heaps are quiescent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .heaps import HeapHierarchy, Role
from .objects import ObjRef

Edge = tuple[ObjRef, int, ObjRef]


@dataclass
class AuditReport:
    down_refs: list[Edge] = field(default_factory=list)
    cross_refs: list[Edge] = field(default_factory=list)
    broken_chains: list[ObjRef] = field(default_factory=list)
    objects_scanned: int = 0

    @property
    def passed(self) -> bool:
        return not (self.down_refs or self.cross_refs or self.broken_chains)

    def merge(self, other: AuditReport) -> AuditReport:
        return AuditReport(
            self.down_refs + other.down_refs,
            self.cross_refs + other.cross_refs,
            self.broken_chains + other.broken_chains,
            self.objects_scanned + other.objects_scanned,
        )

    def summary(self) -> str:
        return (
            f"down_refs={len(self.down_refs)} cross_refs={len(self.cross_refs)} "
            f"broken_chains={len(self.broken_chains)} scanned={self.objects_scanned}"
        )


def _scan_heaps(hier: HeapHierarchy, scope: Iterable[int] | None) -> list[int]:
    if scope is None:
        return [
            h.id for h in hier.all_heaps()
            if not h.retired and hier.store.has_space(h.id)
        ]
    return list(scope)


def audit_disentanglement(hier: HeapHierarchy, scope: Iterable[int] | None = None) -> AuditReport:
    """Check every stored reference against the ancestor relation.

    A reference from an object in heap ``s`` to an object in heap ``t`` is
    fine iff ``t`` is ``s`` or an ancestor of ``s``. Otherwise it is a
    down-reference when ``s`` is an ancestor of ``t`` and a cross-reference
    when the heaps are unrelated (the global heap is unrelated to every
    hierarchy heap). ``scope`` restricts the *source* heaps scanned.
    """
    store = hier.store
    chunks = store.chunks
    anc = hier.ancestor_or_self
    report = AuditReport()
    ok: dict[tuple[int, int], bool] = {}
    for s in _scan_heaps(hier, scope):
        for ref, rec in store.iter_records(s):
            report.objects_scanned += 1
            vals = rec.values
            for i in rec.layout.ptr_fields:
                t = vals[i]
                if t is None:
                    continue
                ch = chunks[t[0]]
                if ch.retired or ch.owner < 0:
                    report.cross_refs.append((ref, i, t))
                    continue
                th = ch.owner
                key = (th, s)
                good = ok.get(key)
                if good is None:
                    good = ok[key] = anc(th, s)
                if good:
                    continue
                if anc(s, th):
                    report.down_refs.append((ref, i, t))
                else:
                    report.cross_refs.append((ref, i, t))
    return report


def forwarding_chain(hier: HeapHierarchy, obj: ObjRef, limit: int | None = None) -> list[ObjRef]:
    """``obj`` followed by every copy along its forwarding chain.

    Stops early (without the repeated element) if a cycle is found or ``limit``
    steps are exceeded.
    """
    store = hier.store
    out = [obj]
    seen = {obj}
    cur = obj
    while True:
        rec = store.record(cur)
        if rec.fwd is None:
            return out
        cur = rec.fwd
        if cur in seen or (limit is not None and len(out) > limit):
            return out
        seen.add(cur)
        out.append(cur)


def audit_forwarding_chains(hier: HeapHierarchy, scope: Iterable[int] | None = None) -> AuditReport:
    """Every chain must be finite and acyclic, end in a valid object with an
    empty slot, and never point from a heap to one that is not its ancestor
    (or itself, once a join has merged both ends)."""
    store = hier.store
    anc = hier.ancestor_or_self
    chunks = store.chunks
    heaps = hier._heaps
    report = AuditReport()
    for s in _scan_heaps(hier, scope):
        for ref, rec in store.iter_records(s):
            report.objects_scanned += 1
            if rec.fwd is None:
                continue
            seen = {ref}
            cur, cur_rec = ref, rec
            while cur_rec.fwd is not None:
                nxt = cur_rec.fwd
                if not store.is_valid(nxt) or nxt in seen:
                    report.broken_chains.append(ref)
                    break
                h0 = chunks[cur[0]].owner
                h1 = chunks[nxt[0]].owner
                t = heaps[h1]
                if t.role is Role.TO_SPACE:
                    # a collection link keeps the object's position
                    ok = t.depth == heaps[h0].depth
                else:
                    # promotion links go strictly up; a later join may fold
                    # both ends into one heap, never the wrong way round
                    ok = anc(h1, h0)
                if not ok:
                    report.broken_chains.append(ref)
                    break
                seen.add(nxt)
                cur, cur_rec = nxt, store.record(nxt)
    return report


def audit_all(hier: HeapHierarchy, scope: Iterable[int] | None = None) -> AuditReport:
    scope = None if scope is None else list(scope)
    a = audit_disentanglement(hier, scope)
    b = audit_forwarding_chains(hier, scope)
    return AuditReport(a.down_refs, a.cross_refs, b.broken_chains, a.objects_scanned)
