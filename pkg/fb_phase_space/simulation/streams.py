"""
Reproducible random streams and block-parallel execution.

Runs are partitioned into fixed-size blocks of consecutive run_ids. Each
(block, purpose) pair owns a Philox stream whose key is the 64-bit master
seed and whose counter encodes the block index, the purpose and a variant
number, so streams never overlap and a block produces the same draws no
matter which worker thread executes it or how many workers exist.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from typing import TypeVar

import numpy as np
from numpy.typing import NDArray

from fb_phase_space.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

SEED_MASK = (1 << 64) - 1

T = TypeVar("T")


class Stream(IntEnum):
    """Purpose tags; each purpose draws from its own counter range."""

    BOUNDARY = 1
    BACKWARD = 2
    INITIAL = 3
    FORWARD = 4
    BACKWARD_B = 5
    FORWARD_B = 6
    READOUT = 7
    CONDITIONAL = 8


def stream_generator(seed: int, block: int, stream: Stream, variant: int = 0) -> np.random.Generator:
    """Generator for one (block, purpose, variant) triple under a master seed."""
    if not 0 <= seed <= SEED_MASK:
        raise ConfigurationError("seed", "must be a 64-bit unsigned integer")
    counter = np.array([0, int(variant), int(block), int(stream)], dtype=np.uint64)
    key = np.array([seed, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


@dataclass(frozen=True, slots=True)
class RunBlock:
    index: int
    start: int
    stop: int
    seed: int

    @property
    def size(self) -> int:
        return self.stop - self.start

    @property
    def run_ids(self) -> NDArray[np.int64]:
        return np.arange(self.start, self.stop, dtype=np.int64)

    def rng(self, stream: Stream, variant: int = 0) -> np.random.Generator:
        return stream_generator(self.seed, self.index, stream, variant)


def partition_runs(n_runs: int, block_size: int, seed: int) -> list[RunBlock]:
    if n_runs < 1:
        raise ConfigurationError("n_runs", f"must be >= 1 (got {n_runs!r})")
    if block_size < 1:
        raise ConfigurationError("block_size", f"must be >= 1 (got {block_size!r})")
    return [
        RunBlock(index=i, start=start, stop=min(start + block_size, n_runs), seed=seed)
        for i, start in enumerate(range(0, n_runs, block_size))
    ]


class BlockExecutor:
    """
    Maps a per-block function over all blocks and yields results in block order.

    Results are consumed in order, so reductions over them are deterministic
    whatever the thread count.
    """

    def __init__(self, n_runs: int, seed: int, *, block_size: int, threads: int = 1):
        if threads < 1:
            raise ConfigurationError("threads", f"must be >= 1 (got {threads!r})")
        self.blocks = partition_runs(n_runs, block_size, seed)
        self.threads = threads

    def map(self, fn: Callable[[RunBlock], T]) -> Iterator[T]:
        logger.debug("Running %d blocks on %d thread(s)", len(self.blocks), self.threads)
        if self.threads == 1:
            yield from map(fn, self.blocks)
            return
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            yield from pool.map(fn, self.blocks)
