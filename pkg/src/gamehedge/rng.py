"""Per-item random streams that do not depend on how work is scheduled.

Item ``i`` of stream ``s`` always draws from ``Philox`` keyed by
``SeedSequence(seed, spawn_key=(s, i))``, so chunking the items across
threads cannot change any number.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

DEFAULT_SEED = 20240607

# stream ids keep unrelated draws from sharing substreams
STREAM_PATHS = 1
STREAM_FBM = 2
STREAM_STEER = 3
STREAM_COUPLING = 4
STREAM_TREES = 5


def item_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def resolve_threads(threads: int | None) -> int:
    if threads is None or threads <= 0:
        return max(1, os.cpu_count() or 1)
    return int(threads)


def fill_rows(
    out: np.ndarray,
    seed: int,
    stream: int,
    draw: Callable[[np.random.Generator, np.ndarray], None],
    threads: int | None = 1,
    offset: int = 0,
) -> np.ndarray:
    """Call ``draw(rng_{offset+i}, out[i])`` for every row, optionally across threads."""
    n = out.shape[0]
    n_threads = min(resolve_threads(threads), max(n, 1))

    def work(lo: int, hi: int):
        for i in range(lo, hi):
            draw(item_rng(seed, stream, offset + i), out[i])

    if n_threads == 1:
        work(0, n)
        return out
    bounds = np.linspace(0, n, n_threads + 1).astype(int)
    with ThreadPoolExecutor(n_threads) as pool:
        list(pool.map(lambda ab: work(*ab), zip(bounds[:-1], bounds[1:])))
    return out


def normals(
    n_rows: int, shape: tuple[int, ...], seed: int, stream: int, threads: int | None = 1, offset: int = 0
) -> np.ndarray:
    """``(n_rows, *shape)`` standard normals, row ``i`` from item stream ``offset + i``."""
    out = np.empty((n_rows, *shape))

    def draw(rng, row):
        row[...] = rng.standard_normal(shape)

    return fill_rows(out, seed, stream, draw, threads, offset)
