"""Deterministic block-parallel execution helpers.

Work is split into contiguous index blocks; each worker writes only its own
block of the preallocated output, so results are identical for any thread
count or scheduling order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

ENV_THREADS = "HXKIT_THREADS"


def resolve_threads(requested: int | None = None) -> int:
    """Thread count from the argument, HXKIT_THREADS, or the CPU count."""
    if requested is not None:
        n = int(requested)
    else:
        env = os.environ.get(ENV_THREADS)
        n = int(env) if env else (os.cpu_count() or 1)
    return max(1, n)


def map_blocks(fn: Callable[[int, int], None], n_items: int, threads: int = 1,
               min_block: int = 64) -> None:
    """Call fn(start, stop) over a partition of range(n_items).

    fn must write results into captured preallocated storage; blocks never
    overlap, so the output is independent of scheduling.
    """
    threads = max(1, int(threads))
    if threads == 1 or n_items <= min_block:
        fn(0, n_items)
        return
    n_blocks = min(threads * 4, max(1, n_items // min_block))
    bounds = [round(i * n_items / n_blocks) for i in range(n_blocks + 1)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, bounds[i], bounds[i + 1]) for i in range(n_blocks)]
        for fut in futures:
            fut.result()
