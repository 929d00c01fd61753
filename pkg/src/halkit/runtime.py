"""Seeded random streams and the worker pool used by replicate loops."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

THREADS_ENV = "HALKIT_THREADS"

# stream ids, so draws for one purpose never depend on draws for another
STREAM_DATA = 0
STREAM_CENSOR = 1
STREAM_NOISE = 2
STREAM_FOLDS = 3


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for ``(seed, *key)``; distinct keys give independent streams."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def worker_count() -> int:
    """Workers allowed by ``HALKIT_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items) -> list:
    """``[fn(x) for x in items]``, spread over worker processes when allowed.

    Results come back in input order, so output never depends on scheduling.
    ``fn`` must be picklable when more than one worker is used.
    """
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
