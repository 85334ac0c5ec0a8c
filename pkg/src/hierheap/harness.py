"""Benchmark driver: configure a runtime, run one benchmark, audit, report."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

from .bench import BENCHMARKS, graph as graphs
from .runtime import AUDIT_MODES, DEFAULT_GC_THRESHOLD, Runtime, RuntimeConfig
from .stats import StatsReport

log = logging.getLogger("hierheap")


@dataclass
class BenchmarkConfig:
    name: str
    size: int | None = None
    grain: int | None = None
    workers: int = 1
    seed: int = 0
    audit: str = "joins"
    gc_threshold: int | None = DEFAULT_GC_THRESHOLD
    deterministic: bool = False
    trace: bool = False
    graph: str | None = None
    preempt: float = 0.0

    def __post_init__(self) -> None:
        if self.name not in BENCHMARKS:
            raise ValueError(f"unknown benchmark {self.name!r}; choose from {', '.join(BENCHMARKS)}")
        b = BENCHMARKS[self.name]
        if self.size is None:
            self.size = b.default_size
        if self.grain is None:
            self.grain = b.default_grain
        if self.size < 1:
            raise ValueError("size must be >= 1")
        if self.grain < 1:
            raise ValueError("grain must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.audit not in AUDIT_MODES:
            raise ValueError(f"audit must be one of {AUDIT_MODES}")
        if self.gc_threshold is not None and self.gc_threshold < 0:
            raise ValueError("gc threshold must be non-negative")


@dataclass
class BenchmarkRun:
    report: StatsReport
    runtime: Runtime
    result: Any


def load_graph(cfg: BenchmarkConfig) -> graphs.Graph:
    if cfg.graph is not None:
        with open(cfg.graph, encoding="utf-8") as fh:
            return graphs.load_edge_list(fh)
    return graphs.random_graph(cfg.size, seed=cfg.seed)


def execute(cfg: BenchmarkConfig) -> BenchmarkRun:
    bench = BENCHMARKS[cfg.name]
    g = load_graph(cfg) if bench.kind == "graph" else None
    rt = Runtime(RuntimeConfig(
        workers=cfg.workers,
        seed=cfg.seed,
        deterministic=cfg.deterministic,
        gc_threshold=cfg.gc_threshold,
        audit=cfg.audit,
        trace=cfg.trace,
        preempt=cfg.preempt,
    ))
    log.info("running %s n=%d grain=%d workers=%d", cfg.name, cfg.size, cfg.grain, cfg.workers)
    result = rt.run(bench.body, rt, cfg.size, cfg.grain, cfg.seed, g)
    store = rt.store
    verified = bool(bench.verify(store, cfg.size, cfg.seed, g, result))
    if not verified:
        log.error("%s: result failed verification", cfg.name)
    report = rt.report(
        benchmark=cfg.name,
        size=cfg.size,
        grain=cfg.grain,
        verified=verified,
        result=bench.summary(store, result),
    )
    return BenchmarkRun(report, rt, result)


def run_benchmark(cfg: BenchmarkConfig) -> StatsReport:
    return execute(cfg).report
