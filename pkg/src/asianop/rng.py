"""Counter-based random streams for layout-independent Monte Carlo.

Paths are cut into fixed-size blocks. Block ``b`` of logical stream ``k``
draws from a Philox generator keyed by ``SeedSequence(seed, spawn_key=(k, b))``,
so the numbers a path sees depend only on ``(seed, k, path index)`` and never
on how blocks are spread over worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

BLOCK_SIZE = 8192


def block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def blocks(n: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int, int]]:
    """``(block index, start, stop)`` triples covering ``range(n)``."""
    return [(b, lo, min(lo + block_size, n)) for b, lo in enumerate(range(0, n, block_size))]


def map_blocks(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Apply ``fn`` to every block; results come back in block order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def normals(rng: np.random.Generator, shape, antithetic: bool = False) -> np.ndarray:
    """Standard normals of ``shape`` (time, paths); antithetic pairs share draws."""
    steps, width = shape
    if not antithetic:
        return rng.standard_normal((steps, width))
    half = (width + 1) // 2
    z = rng.standard_normal((steps, half))
    return np.concatenate([z, -z], axis=1)[:, :width]
