"""Replicate-parallel Monte Carlo plumbing.

Replicates are grouped into fixed-size blocks and block ``b`` always draws
from stream ``stream_offset + b`` of the run seed.  The mapping does not
depend on how many threads execute the blocks, so results are identical
for any ``--threads`` value.  The numba kernels release the GIL, which is
what makes thread-level parallelism worthwhile.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

from .params import RngSpec

log = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_BLOCK_SIZE = 1000
THREADS_ENV = "PANGENOME_THREADS"

# Stream namespaces keep different samplers within one run independent.
STREAM_BIRTHDEATH = 1 << 40
STREAM_AGTG = 2 << 40
STREAM_TWO_GENE = 3 << 40
STREAM_MORAN = 4 << 40
STREAM_DRIFT = 5 << 40
STREAM_MISC = 6 << 40


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
        else:
            if value >= 1:
                return value
            log.warning("ignoring non-positive %s=%r", THREADS_ENV, env)
    return os.cpu_count() or 1


def block_sizes(reps: int, block_size: int = DEFAULT_BLOCK_SIZE) -> list[int]:
    if reps < 0:
        raise ValueError(f"reps must be >= 0, got {reps}")
    full, rest = divmod(reps, block_size)
    return [block_size] * full + ([rest] if rest else [])


def run_blocks(
    worker: Callable[[np.random.Generator, int, int], T],
    reps: int,
    seed: int,
    *,
    stream_offset: int = 0,
    block_size: int = DEFAULT_BLOCK_SIZE,
    threads: int | None = None,
) -> list[T]:
    """Call ``worker(rng, block_index, count)`` once per block, in block order."""
    sizes = block_sizes(reps, block_size)
    threads = default_threads() if threads is None else max(1, int(threads))

    def job(b: int) -> T:
        rng = RngSpec(seed, stream_offset + b).generator()
        return worker(rng, b, sizes[b])

    if threads == 1 or len(sizes) <= 1:
        return [job(b) for b in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, range(len(sizes))))


def concat(parts: Sequence[np.ndarray]) -> np.ndarray:
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)
