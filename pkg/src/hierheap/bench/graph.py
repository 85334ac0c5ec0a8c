"""Breadth-first search variants over a compressed adjacency graph.

The graph and the per-vertex state arrays live in the root heap; BFS rounds
fan out over the frontier with fork/join, so most state updates come from
tasks deeper in the hierarchy (distant writes).

* reachability: racy read-then-write of a visited flag
* usp: the round number is claimed into a distance array with CAS
* usp-tree: a visited flag is claimed with CAS, then the ancestor list
  ``u :: A[u]`` is allocated locally and stored into ``A[v]``, which
  promotes the new cons cell to the root
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from typing import Iterable

from ..objects import REF_IMM, REF_MUT, SCALAR_IMM, SCALAR_MUT, ObjectLayout, ObjRef
from . import seq

CONS = ObjectLayout([SCALAR_IMM, REF_IMM])


@dataclass
class Graph:
    n: int
    offsets: list[int]
    targets: list[int]

    @property
    def m(self) -> int:
        return len(self.targets)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> Graph:
        adj: list[list[int]] = [[] for _ in range(n)]
        for u, v in edges:
            adj[u].append(v)
        offsets = [0]
        targets: list[int] = []
        for nbrs in adj:
            targets.extend(nbrs)
            offsets.append(len(targets))
        return cls(n, offsets, targets)

    def neighbors(self, u: int) -> list[int]:
        return self.targets[self.offsets[u]:self.offsets[u + 1]]


def random_graph(n: int, degree: int = 8, seed: int = 0) -> Graph:
    """Seeded random digraph: every vertex gets ``degree`` uniformly random out-edges."""
    rng = random.Random(seed)
    return Graph.from_edges(n, ((u, rng.randrange(n)) for u in range(n) for _ in range(degree)))


def load_edge_list(lines: Iterable[str]) -> Graph:
    """Parse one ``u v`` edge per line; ``#`` starts a comment."""
    edges = []
    n = 0
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'u v', got {line!r}")
        u, v = int(parts[0]), int(parts[1])
        if u < 0 or v < 0:
            raise ValueError(f"line {lineno}: negative vertex id")
        edges.append((u, v))
        n = max(n, u + 1, v + 1)
    return Graph.from_edges(n, edges)


def bfs_oracle(g: Graph, src: int = 0) -> list[int]:
    dist = [-1] * g.n
    dist[src] = 0
    q = deque([src])
    while q:
        u = q.popleft()
        for v in g.neighbors(u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


class HeapGraph:
    """The graph's arrays allocated in the running task's heap."""

    def __init__(self, rt, g: Graph):
        self.n = g.n
        self.off = rt.alloc(ObjectLayout.array(g.n + 1, SCALAR_IMM), g.offsets)
        self.tgt = rt.alloc(ObjectLayout.array(max(g.m, 0), SCALAR_IMM), g.targets)


def _visit(rt, hg: HeapGraph, claim, frontier: ObjRef, lo: int, hi: int, grain: int, rnd: int) -> ObjRef:
    """Expand ``frontier[lo:hi]`` (a rope leaf) and return the next-frontier rope."""
    if hi - lo > grain:
        mid = (lo + hi) // 2
        a, b = rt.fork_join(
            lambda: _visit(rt, hg, claim, frontier, lo, mid, grain, rnd),
            lambda: _visit(rt, hg, claim, frontier, mid, hi, grain, rnd),
        )
        return seq.make_node(rt, a, b)
    rd = rt.read_immutable
    out = []
    for k in range(lo + 1, hi + 1):
        u = rd(frontier, k)
        for e in range(rd(hg.off, u), rd(hg.off, u + 1)):
            v = rd(hg.tgt, e)
            if claim(u, v, rnd):
                out.append(v)
    return seq.make_leaf(rt, out)


def _round(rt, hg, claim, frontier: ObjRef, grain: int, rnd: int) -> ObjRef:
    if seq.tag(rt, frontier) == seq.NODE:
        l, r = seq.children(rt, frontier)
        a, b = rt.fork_join(
            lambda: _round(rt, hg, claim, l, grain, rnd),
            lambda: _round(rt, hg, claim, r, grain, rnd),
        )
        return seq.make_node(rt, a, b)
    return _visit(rt, hg, claim, frontier, 0, seq.length(rt, frontier), grain, rnd)


def _bfs(rt, hg: HeapGraph, claim, src: int, grain: int) -> int:
    frontier = seq.make_leaf(rt, [src])
    rnd = 0
    while seq.length(rt, frontier) > 0:
        rnd += 1
        frontier = _round(rt, hg, claim, frontier, grain, rnd)
    return rnd - 1


def reachability(rt, g: Graph, grain: int, src: int = 0) -> ObjRef:
    hg = HeapGraph(rt, g)
    visited = rt.alloc(ObjectLayout.array(g.n, SCALAR_MUT), [0] * g.n)
    rt.write_nonptr(visited, src, 1)

    def claim(u: int, v: int, rnd: int) -> bool:
        if rt.read_mutable(visited, v):
            return False
        rt.write_nonptr(visited, v, 1)
        return True

    _bfs(rt, hg, claim, src, grain)
    return visited


def usp(rt, g: Graph, grain: int, src: int = 0) -> ObjRef:
    hg = HeapGraph(rt, g)
    dist = rt.alloc(ObjectLayout.array(g.n, SCALAR_MUT), [-1] * g.n)
    rt.write_nonptr(dist, src, 0)

    def claim(u: int, v: int, rnd: int) -> bool:
        return rt.compare_and_swap(dist, v, -1, rnd)

    _bfs(rt, hg, claim, src, grain)
    return dist


def usp_tree(rt, g: Graph, grain: int, src: int = 0) -> ObjRef:
    hg = HeapGraph(rt, g)
    visited = rt.alloc(ObjectLayout.array(g.n, SCALAR_MUT), [0] * g.n)
    anc = rt.alloc(ObjectLayout.array(g.n, REF_MUT), [None] * g.n)
    rt.write_nonptr(visited, src, 1)

    def claim(u: int, v: int, rnd: int) -> bool:
        if not rt.compare_and_swap(visited, v, 0, 1):
            return False
        cell = rt.alloc(CONS, [u, rt.read_mutable(anc, u)])
        rt.write_ptr(anc, v, cell)
        return True

    _bfs(rt, hg, claim, src, grain)
    return anc


# -- verification ---------------------------------------------------------------------


def verify_reachability(store, g: Graph, visited: ObjRef, src: int = 0) -> bool:
    dist = bfs_oracle(g, src)
    return all(bool(seq.master_field(store, visited, v)) == (dist[v] >= 0) for v in range(g.n))


def verify_usp(store, g: Graph, dist_ref: ObjRef, src: int = 0) -> bool:
    dist = bfs_oracle(g, src)
    return all(seq.master_field(store, dist_ref, v) == dist[v] for v in range(g.n))


def verify_usp_tree(store, g: Graph, anc: ObjRef, src: int = 0) -> bool:
    """Each reached vertex's list must be a shortest path back to ``src``."""
    dist = bfs_oracle(g, src)
    edges = {(u, v) for u in range(g.n) for v in g.neighbors(u)}
    for v in range(g.n):
        lst = seq.master_field(store, anc, v)
        if dist[v] < 0:
            if lst is not None:
                return False
            continue
        path = []
        while lst is not None:
            path.append(seq.master_field(store, lst, 0))
            lst = seq.master_field(store, lst, 1)
        if len(path) != dist[v]:
            return False
        hops = [v, *path]
        if dist[v] > 0 and hops[-1] != src:
            return False
        if any((hops[k + 1], hops[k]) not in edges for k in range(len(hops) - 1)):
            return False
    return True
