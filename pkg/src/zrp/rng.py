"""Seeded random streams.

Every stream is a Philox (counter-based, 64-bit key) generator keyed by a
``SeedSequence``.  A single trajectory uses ``SeedSequence(seed)``.  Batches
of paths are cut into fixed blocks of ``BLOCK`` consecutive path indices;
block b of a batch tagged ``stream_tag`` draws from
``SeedSequence(seed, spawn_key=(stream_tag, b))``.  Results therefore
do not depend on how many workers process the blocks.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigError

BLOCK = 4096
MAX_SEED = 2**64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, (bool, np.bool_)) or int(seed) != seed or not 0 <= int(seed) <= MAX_SEED:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}", ["seed"])
    return int(seed)


def make_rng(seed, *spawn_key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in spawn_key))
    return np.random.Generator(np.random.Philox(ss))


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("ZRP_WORKERS", "1")))
    except ValueError:
        return 1


def blocks(n_paths: int, block: int = BLOCK):
    """(block index, first path, number of paths) for a batch."""
    out = []
    start = 0
    b = 0
    while start < n_paths:
        size = min(block, n_paths - start)
        out.append((b, start, size))
        start += size
        b += 1
    return out


def run_blocks(fn, seed, n_paths: int, *, stream_tag: int = 0, workers: int | None = None):
    """Call ``fn(rng, size)`` for every block and return results in block order.

    ``stream_tag`` separates unrelated batches drawn from the same seed.
    """
    seed = check_seed(seed)
    jobs = blocks(n_paths)
    workers = worker_count() if workers is None else workers

    def one(job):
        b, _, size = job
        return fn(make_rng(seed, stream_tag, b), size)

    if workers <= 1 or len(jobs) <= 1:
        return [one(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, jobs))
