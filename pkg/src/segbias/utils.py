"""Small shared helpers."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    """Worker cap from SEGBIAS_THREADS; defaults to sequential execution."""
    try:
        return max(1, int(os.environ.get("SEGBIAS_THREADS", "1")))
    except ValueError:
        return 1


def thread_map(fn, items):
    """Order-preserving map, threaded when SEGBIAS_THREADS > 1.

    Results are identical to the sequential path because tasks are
    independent and outputs are collected in input order.
    """
    workers = worker_count()
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))
