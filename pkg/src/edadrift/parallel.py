"""Replica-parallel map with a deterministic, index-ordered result."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")

THREADS_ENV = "EDADRIFT_THREADS"


def default_workers() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _run_chunk(fn: Callable[[int], T], start: int, stop: int) -> list[T]:
    return [fn(r) for r in range(start, stop)]


def map_replicas(fn: Callable[[int], T], n: int, workers: int | None = None) -> list[T]:
    """Evaluate ``fn(0), ..., fn(n - 1)`` and return the results in index order.

    ``fn`` must be picklable when ``workers > 1``.  Each call has to derive its
    randomness from its own index, so the output does not depend on ``workers``.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or n < 2:
        return _run_chunk(fn, 0, n)
    n_chunks = min(n, workers * 4)
    bounds = [n * k // n_chunks for k in range(n_chunks + 1)]
    out: list[T] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chunk, fn, a, b) for a, b in zip(bounds, bounds[1:])]
        for fut in futures:
            out.extend(fut.result())
    return out
