"""Counter-based random streams and deterministic block-parallel map.

Every random draw is addressed by ``(seed, block, lane)``: the Philox key
is built from these integers, so the numbers consumed by one block never
depend on how blocks are scheduled.  Reductions are always done in block
order, which makes results independent of the worker count.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

WORKERS_ENV = "PAMLAB_WORKERS"


def stream(seed, block, lane=0):
    """Generator for block ``block`` and lane ``lane`` of run ``seed``."""
    if seed < 0 or block < 0 or lane < 0:
        raise ValueError("seed, block and lane must be nonnegative")
    key = np.array([seed, (block << 20) | lane], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def block_sizes(samples, block_size):
    """Split ``samples`` into consecutive blocks of at most ``block_size``."""
    if samples < 1:
        raise ValueError("need at least one sample")
    full, rest = divmod(samples, block_size)
    return [block_size] * full + ([rest] if rest else [])


def map_blocks(func, sizes, workers=None):
    """``[func(b, sizes[b]) for b in range(len(sizes))]``, optionally threaded.

    The output order is the block order regardless of ``workers``.
    """
    workers = default_workers() if workers is None else workers
    jobs = list(enumerate(sizes))
    if workers <= 1 or len(jobs) == 1:
        return [func(b, size) for b, size in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: func(*job), jobs))
