"""Chunked thread-pool helper.

Work is always cut into the same fixed-size chunks whatever the worker
count, so results never depend on how many threads ran them.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "SVCAL_THREADS"
CHUNK = 2048


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        n = int(value)
        if n < 1:
            raise ValueError("%s must be a positive integer" % THREADS_ENV)
        return n
    return os.cpu_count() or 1


def chunked_map(fn, n_items: int, threads: int | None = None, chunk: int = CHUNK) -> np.ndarray:
    """Evaluate ``fn(start, stop)`` over fixed chunks of ``range(n_items)``.

    ``fn`` returns an array whose first axis has length ``stop - start``;
    the pieces are concatenated in index order.
    """
    threads = default_threads() if threads is None else threads
    if threads < 1:
        raise ValueError("thread count must be positive")
    bounds = [(s, min(s + chunk, n_items)) for s in range(0, n_items, chunk)]
    if not bounds:
        return fn(0, 0)
    if threads == 1 or len(bounds) == 1:
        parts = [fn(a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), bounds))
    return np.concatenate(parts)
