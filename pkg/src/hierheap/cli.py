"""``hh`` command line.

    hh run --bench NAME --size N --grain G --workers W --seed S
           --audit {off|joins|every-op} --gc-threshold BYTES
           [--deterministic] [--trace PATH] [--stats PATH] [--graph PATH]

Exit status: 0 when the run verified and every audit passed, 1 on an audit
(or verification) failure, 2 on a usage error. ``HH_LOG`` selects the
diagnostic level (error, info, debug).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .bench import BENCHMARKS
from .harness import BenchmarkConfig, execute
from .runtime import DEFAULT_GC_THRESHOLD

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 2 with usage, as argparse does, but keep it explicit
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _non_negative(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hh", description="Hierarchical-heap runtime benchmark harness.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run one benchmark")
    r.add_argument("--bench", required=True, choices=sorted(BENCHMARKS), metavar="NAME",
                   help="one of: " + ", ".join(BENCHMARKS))
    r.add_argument("--size", type=_positive, default=None, help="input size n (default per benchmark)")
    r.add_argument("--grain", type=_positive, default=None, help="sequential threshold (default per benchmark)")
    r.add_argument("--workers", type=_positive, default=1)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--audit", choices=["off", "joins", "every-op"], default="joins")
    r.add_argument("--gc-threshold", type=_non_negative, default=DEFAULT_GC_THRESHOLD, metavar="BYTES",
                   help="leaf-heap occupancy that requests a collection (0 disables)")
    r.add_argument("--deterministic", action="store_true", help="seeded, replayable scheduling")
    r.add_argument("--trace", metavar="PATH", help="write an hh-trace JSONL event log")
    r.add_argument("--stats", metavar="PATH", help="write the hh-stats JSON report")
    r.add_argument("--graph", metavar="PATH", help="edge list ('u v' per line) for graph benchmarks")
    return p


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("HH_LOG", "error").lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = BenchmarkConfig(
            name=args.bench,
            size=args.size,
            grain=args.grain,
            workers=args.workers,
            seed=args.seed,
            audit=args.audit,
            gc_threshold=args.gc_threshold or None,
            deterministic=args.deterministic,
            trace=args.trace is not None,
            graph=args.graph,
        )
    except ValueError as e:
        print(f"hh: error: {e}", file=sys.stderr)
        return 2
    if args.graph is not None and not os.path.exists(args.graph):
        print(f"hh: error: graph file {args.graph!r} not found", file=sys.stderr)
        return 2
    try:
        run = execute(cfg)
    except ValueError as e:
        print(f"hh: error: {e}", file=sys.stderr)
        return 2
    report = run.report
    sys.stdout.write(report.to_text())
    if args.stats:
        with open(args.stats, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            run.runtime.tracer.write(fh)
    return 0 if report.audit_passed and report.verified else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
