"""Tournament tree: every eliminated contestant points at whoever beat it.

Contestant objects are created by the divide-and-conquer itself (tabulate
fused with the tournament). At each join both winners already live in the
joining task's heap, so setting the loser's parent pointer is a local,
non-promoting pointer write.
"""

from __future__ import annotations

from ..objects import REF_MUT, SCALAR_IMM, ObjectLayout, ObjRef
from . import seq

CONTESTANT = ObjectLayout([SCALAR_IMM, SCALAR_IMM, REF_MUT])  # fitness, id, parent
FITNESS, ID, PARENT = 0, 1, 2


def fitness(i: int, seed: int) -> int:
    return seq.mix(i, seed)


def _play(rt, a: ObjRef, b: ObjRef) -> ObjRef:
    fa = rt.read_immutable(a, FITNESS)
    fb = rt.read_immutable(b, FITNESS)
    # ties go to the lower id, which is always the left contestant
    win, lose = (a, b) if fa >= fb else (b, a)
    rt.write_ptr(lose, PARENT, win)
    return win


def _seq_tourney(rt, lo: int, hi: int, seed: int) -> tuple[ObjRef, list[ObjRef]]:
    people = [rt.alloc(CONTESTANT, [fitness(i, seed), i, None]) for i in range(lo, hi)]
    round_ = people
    while len(round_) > 1:
        nxt = [_play(rt, round_[k], round_[k + 1]) for k in range(0, len(round_) - 1, 2)]
        if len(round_) % 2:
            nxt.append(round_[-1])
        round_ = nxt
    return round_[0], people


def tourney(rt, lo: int, hi: int, grain: int, seed: int) -> tuple[ObjRef, ObjRef]:
    """Returns (champion, rope of all contestants)."""
    if hi - lo <= grain:
        champ, people = _seq_tourney(rt, lo, hi, seed)
        return champ, seq.make_rleaf(rt, people)
    mid = (lo + hi) // 2
    (wa, sa), (wb, sb) = rt.fork_join(
        lambda: tourney(rt, lo, mid, grain, seed),
        lambda: tourney(rt, mid, hi, grain, seed),
    )
    return _play(rt, wa, wb), seq.make_node(rt, sa, sb)


def verify(store, champ: ObjRef, people: ObjRef, n: int, seed: int) -> bool:
    best = max(range(n), key=lambda i: (fitness(i, seed), -i))
    if seq.master_field(store, champ, ID) != best:
        return False
    if seq.master_field(store, champ, PARENT) is not None:
        return False
    everyone = seq.to_list(store, people)
    if sorted(seq.master_field(store, p, ID) for p in everyone) != list(range(n)):
        return False
    for p in everyone:
        cur, steps = p, 0
        while (nxt := seq.master_field(store, cur, PARENT)) is not None:
            cur = nxt
            steps += 1
            if steps > n:
                return False
        if seq.master_field(store, cur, ID) != best:
            return False
    return True
