"""Small shared runtime helpers."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "HYDROBRACKETS_THREADS"


def thread_count() -> int:
    """Worker cap from the environment; defaults to single-threaded."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def sweep(fn, pts, min_chunk=16):
    """Apply a batched point function, splitting across worker threads.

    Results are concatenated in input order, so the output is identical to
    a single-threaded call regardless of the worker cap.
    """
    workers = thread_count()
    if workers <= 1 or len(pts) < 2 * min_chunk:
        return fn(pts)
    chunks = np.array_split(pts, min(workers, max(1, len(pts) // min_chunk)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(fn, chunks))
    return np.concatenate(parts, axis=0)
