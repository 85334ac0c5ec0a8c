"""Pure benchmarks: fib and the sequence primitives."""

from __future__ import annotations

from . import seq


def fib_seq(n: int) -> int:
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def _fib_rec(n: int) -> int:
    return n if n < 2 else _fib_rec(n - 1) + _fib_rec(n - 2)


def fib(rt, n: int, grain: int) -> int:
    """Naive parallel Fibonacci; below ``grain`` the naive recursion runs sequentially."""
    if n <= max(grain, 1):
        return _fib_rec(n)
    a, b = rt.fork_join(lambda: fib(rt, n - 1, grain), lambda: fib(rt, n - 2, grain))
    return a + b


def element(seed: int):
    return lambda i: seq.mix(i, seed)


def map_fn(x: int) -> int:
    return (3 * x + 1) % 1_000_003


def filter_pred(x: int) -> bool:
    return x % 3 == 0
