"""Deterministic fork-join Monte Carlo over fixed sample blocks.

The total sample budget is cut into fixed-size blocks; block b always uses
the generator stream (seed, b).  Workers only decide who computes which
block, and partial results are reduced in block order, so reports are
identical for any worker count.
"""

from __future__ import annotations

import multiprocessing as mp
import os

__all__ = ["default_workers", "block_counts", "run_blocks", "BLOCK_SIZE"]

BLOCK_SIZE = 65_536
WORKERS_ENV = "BILLIARDLAB_WORKERS"


def default_workers(requested=None):
    if requested is not None and requested > 0:
        return int(requested)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            value = int(env)
            if value > 0:
                return value
        except ValueError:
            pass
    return 1


def block_counts(total, block_size=BLOCK_SIZE):
    """Split a sample budget into fixed blocks (the last one may be short)."""
    total = int(total)
    out = []
    while total > 0:
        take = min(block_size, total)
        out.append(take)
        total -= take
    return out


def run_blocks(worker, tasks, workers=1):
    """Map `worker` over task tuples, preserving task order in the result."""
    workers = min(default_workers(workers), len(tasks)) or 1
    if workers <= 1:
        return [worker(t) for t in tasks]
    ctx = mp.get_context("fork")
    with ctx.Pool(processes=workers) as pool:
        return pool.map(worker, tasks)
