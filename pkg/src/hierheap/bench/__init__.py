"""Desk-scale benchmark corpus.

Each entry runs inside the root task of a runtime and returns whatever the
verification oracle needs; verification reads the store directly so it does
not disturb the operation counters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from . import basic, graph, seq, sorting, tourney


@dataclass(frozen=True)
class Benchmark:
    name: str
    kind: str  # "pure", "imperative" or "graph"
    default_size: int
    default_grain: int
    # (rt, size, grain, seed, graph) -> result, evaluated in the root task
    body: Callable[..., Any]
    # (store, size, seed, graph, result) -> bool
    verify: Callable[..., bool]
    summary: Callable[[Any, Any], str] = lambda store, result: ""


def _elements(n: int, seed: int) -> list[int]:
    f = basic.element(seed)
    return [f(i) for i in range(n)]


def _dedup_element(n: int, seed: int):
    # roughly one distinct key per ten elements
    k = max(1, n // 10)
    return lambda i: seq.mix(i, seed) % k


def _tab(rt, n, grain, seed):
    return seq.tabulate(rt, n, basic.element(seed), grain)


def _b_fib(rt, n, grain, seed, g):
    return basic.fib(rt, n, grain)


def _b_tabulate(rt, n, grain, seed, g):
    return _tab(rt, n, grain, seed)


def _b_map(rt, n, grain, seed, g):
    return seq.map_seq(rt, _tab(rt, n, grain, seed), basic.map_fn)


def _b_reduce(rt, n, grain, seed, g):
    return seq.reduce_seq(rt, _tab(rt, n, grain, seed), lambda a, b: a + b, 0)


def _b_filter(rt, n, grain, seed, g):
    return seq.filter_seq(rt, _tab(rt, n, grain, seed), basic.filter_pred)


def _b_msort_pure(rt, n, grain, seed, g):
    return sorting.msort_pure(rt, _tab(rt, n, grain, seed))


def _b_msort(rt, n, grain, seed, g):
    return sorting.msort(rt, _tab(rt, n, grain, seed))


def _b_dedup(rt, n, grain, seed, g):
    return sorting.dedup(rt, seq.tabulate(rt, n, _dedup_element(n, seed), grain))


def _b_tourney(rt, n, grain, seed, g):
    return tourney.tourney(rt, 0, n, grain, seed)


def _b_reach(rt, n, grain, seed, g):
    return graph.reachability(rt, g, grain)


def _b_usp(rt, n, grain, seed, g):
    return graph.usp(rt, g, grain)


def _b_usp_tree(rt, n, grain, seed, g):
    return graph.usp_tree(rt, g, grain)


def _array(store, ref) -> list:
    return seq.master_values(store, ref)


BENCHMARKS: dict[str, Benchmark] = {
    b.name: b
    for b in [
        Benchmark(
            "fib", "pure", 25, 15, _b_fib,
            lambda st, n, seed, g, r: r == basic.fib_seq(n),
            lambda st, r: str(r),
        ),
        Benchmark(
            "tabulate", "pure", 100_000, 1000, _b_tabulate,
            lambda st, n, seed, g, r: seq.to_list(st, r) == _elements(n, seed),
            lambda st, r: f"length={len(seq.to_list(st, r))}",
        ),
        Benchmark(
            "map", "pure", 100_000, 1000, _b_map,
            lambda st, n, seed, g, r: seq.to_list(st, r) == [basic.map_fn(x) for x in _elements(n, seed)],
            lambda st, r: f"length={len(seq.to_list(st, r))}",
        ),
        Benchmark(
            "reduce", "pure", 100_000, 1000, _b_reduce,
            lambda st, n, seed, g, r: r == sum(_elements(n, seed)),
            lambda st, r: str(r),
        ),
        Benchmark(
            "filter", "pure", 100_000, 1000, _b_filter,
            lambda st, n, seed, g, r: seq.to_list(st, r) == [x for x in _elements(n, seed) if basic.filter_pred(x)],
            lambda st, r: f"length={len(seq.to_list(st, r))}",
        ),
        Benchmark(
            "msort-pure", "pure", 100_000, 1000, _b_msort_pure,
            lambda st, n, seed, g, r: seq.to_list(st, r) == sorted(_elements(n, seed)),
            lambda st, r: f"length={len(seq.to_list(st, r))}",
        ),
        Benchmark(
            "msort", "imperative", 100_000, 1000, _b_msort,
            lambda st, n, seed, g, r: _array(st, r) == sorted(_elements(n, seed)),
            lambda st, r: f"length={len(_array(st, r))}",
        ),
        Benchmark(
            "dedup", "imperative", 100_000, 1000, _b_dedup,
            lambda st, n, seed, g, r: _array(st, r) == sorted({_dedup_element(n, seed)(i) for i in range(n)}),
            lambda st, r: f"unique={len(_array(st, r))}",
        ),
        Benchmark(
            "tourney", "imperative", 100_000, 1000, _b_tourney,
            lambda st, n, seed, g, r: tourney.verify(st, r[0], r[1], n, seed),
            lambda st, r: f"champion={seq.master_field(st, r[0], tourney.ID)}",
        ),
        Benchmark(
            "reachability", "graph", 10_000, 100, _b_reach,
            lambda st, n, seed, g, r: graph.verify_reachability(st, g, r),
            lambda st, r: f"reached={sum(1 for x in _array(st, r) if x)}",
        ),
        Benchmark(
            "usp", "graph", 10_000, 100, _b_usp,
            lambda st, n, seed, g, r: graph.verify_usp(st, g, r),
            lambda st, r: f"reached={sum(1 for x in _array(st, r) if x >= 0)}",
        ),
        Benchmark(
            "usp-tree", "graph", 10_000, 100, _b_usp_tree,
            lambda st, n, seed, g, r: graph.verify_usp_tree(st, g, r),
            lambda st, r: f"reached={sum(1 for x in _array(st, r) if x is not None) + 1}",
        ),
    ]
}

PURE = [b.name for b in BENCHMARKS.values() if b.kind == "pure" and b.name != "fib"]

__all__ = ["BENCHMARKS", "PURE", "Benchmark", "basic", "graph", "seq", "sorting", "tourney"]
