from __future__ import annotations

import io

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from hierheap import Locality, OpClass, Runtime, RuntimeConfig
from hierheap.bench import BENCHMARKS, PURE, graph, seq, sorting, tourney
from hierheap.harness import BenchmarkConfig, execute

SMALL = {"fib": 15}


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
@pytest.mark.parametrize("workers", [1, 4])
def test_every_benchmark_verifies(name, workers):
    size = SMALL.get(name, 700)
    grain = 5 if name == "fib" else 40
    run = execute(BenchmarkConfig(name, size=size, grain=grain, workers=workers, seed=workers))
    assert run.report.verified, name
    assert run.report.audit_passed


@pytest.mark.parametrize("name", ["msort", "tourney", "usp-tree", "dedup"])
def test_benchmarks_deterministic_mode(name):
    cfg = BenchmarkConfig(name, size=500, grain=30, workers=3, seed=11, deterministic=True, preempt=0.05)
    a, b = execute(cfg).report, execute(cfg).report
    assert a.verified and a.steals > 0
    assert (a.counters, a.steals, a.promotions) == (b.counters, b.steals, b.promotions)


def test_pure_list():
    assert sorted(PURE) == sorted(["tabulate", "map", "reduce", "filter", "msort-pure"])


def test_bfs_oracle_agrees_with_networkx():
    for seed in range(5):
        g = graph.random_graph(300, degree=2, seed=seed)
        G = nx.DiGraph()
        G.add_nodes_from(range(g.n))
        G.add_edges_from((u, v) for u in range(g.n) for v in g.neighbors(u))
        ref = nx.single_source_shortest_path_length(G, 0)
        assert graph.bfs_oracle(g) == [ref.get(v, -1) for v in range(g.n)]


def test_graph_benchmarks_on_sparse_graph():
    # low degree leaves part of the graph unreachable
    g = graph.random_graph(400, degree=1, seed=3)
    assert -1 in graph.bfs_oracle(g)
    for bench, verify in [
        (graph.reachability, graph.verify_reachability),
        (graph.usp, graph.verify_usp),
        (graph.usp_tree, graph.verify_usp_tree),
    ]:
        rt = Runtime(RuntimeConfig(workers=3, seed=1, audit="joins"))
        out = rt.run(bench, rt, g, 16)
        assert verify(rt.store, g, out) and rt.audit_passed


def test_verifiers_reject_corruption():
    g = graph.random_graph(200, seed=0)
    rt = Runtime(RuntimeConfig(workers=1))
    dist = rt.run(graph.usp, rt, g, 16)
    assert graph.verify_usp(rt.store, g, dist)
    rec = rt.store.record(dist)
    v = next(i for i, d in enumerate(rec.values) if d > 0)
    rec.values[v] += 1
    assert not graph.verify_usp(rt.store, g, dist)


def test_edge_list_parsing():
    g = graph.load_edge_list(io.StringIO("# comment\n0 1\n1 2  # trailing\n\n2 0\n"))
    assert g.n == 3 and g.neighbors(1) == [2]
    with pytest.raises(ValueError):
        graph.load_edge_list(["0 1 2"])
    with pytest.raises(ValueError):
        graph.load_edge_list(["-1 0"])


def test_tourney_champion_oracle():
    rt = Runtime(RuntimeConfig(workers=2, seed=5))
    champ, people = rt.run(tourney.tourney, rt, 0, 333, 20, 9)
    best = max(range(333), key=lambda i: (tourney.fitness(i, 9), -i))
    assert seq.master_field(rt.store, champ, tourney.ID) == best
    assert tourney.verify(rt.store, champ, people, 333, 9)
    assert rt.report().counter(OpClass.WRITE_REF_NONPROMOTING, Locality.LOCAL) > 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-1000, 1000), max_size=300))
def test_pure_quicksort(xs):
    assert sorting.pure_quicksort(xs) == sorted(xs)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 50), max_size=120), st.lists(st.integers(0, 50), max_size=120))
def test_merge_arrays(xs, ys):
    rt = Runtime(RuntimeConfig(workers=1))

    def body():
        a = sorting.mut_array(rt, sorted(xs))
        b = sorting.mut_array(rt, sorted(ys))
        return sorting.merge_arrays(rt, a, b), sorting.merge_arrays(rt, a, b, dedup=True)

    m, d = rt.run(body)
    assert seq.master_values(rt.store, m) == sorted(xs + ys)
    assert seq.master_values(rt.store, d) == sorted(set(xs) | set(ys))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(-99, 99), max_size=200))
def test_quicksort_inplace(xs):
    rt = Runtime(RuntimeConfig(workers=1))

    def body():
        a = sorting.mut_array(rt, list(xs))
        sorting.quicksort_inplace(rt, a, 0, len(xs) - 1)  # inclusive bound
        return a

    a = rt.run(body)
    assert seq.master_values(rt.store, a) == sorted(xs)


def test_mix_is_deterministic_and_bounded():
    vals = [seq.mix(i, 4) for i in range(1000)]
    assert vals == [seq.mix(i, 4) for i in range(1000)]
    assert all(0 <= v < 2**31 for v in vals)
    assert len(set(vals)) > 990
