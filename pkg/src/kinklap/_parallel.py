"""Deterministic block-parallel helpers.

Random streams are keyed by ``(seed, stream, block)`` so every block draws the
same numbers regardless of which worker runs it, and reductions combine
per-block partial sums with :func:`math.fsum`, which is exactly rounded and
therefore independent of the combination order.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK_SIZE = 1 << 16
THREADS_ENV = "KINKLAP_THREADS"


def worker_count():
    raw = os.environ.get(THREADS_ENV, "")
    if raw.strip():
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return min(8, os.cpu_count() or 1)


def block_rng(seed, block, stream=0):
    """Generator for one block; independent of scheduling."""
    seq = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(seq))


def block_ranges(n, block_size=BLOCK_SIZE):
    return [(start, min(start + block_size, n)) for start in range(0, n, block_size)]


def map_ordered(fn, items):
    """``[fn(item) for item in items]`` computed on the worker pool, in input order."""
    items = list(items)
    workers = worker_count()
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def exact_sum(partials):
    """Entrywise exactly rounded sum over the first axis of stacked partial sums."""
    arr = np.asarray(partials, dtype=float)
    if arr.ndim == 1:
        return math.fsum(arr)
    flat = arr.reshape(arr.shape[0], -1)
    out = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])])
    return out.reshape(arr.shape[1:])
