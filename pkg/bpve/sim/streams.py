"""Seeded random streams and batch scheduling.

A stream is a pure function of ``(scenario_seed, replicate_index)``: the
index goes into the ``spawn_key`` of a ``SeedSequence`` so distinct indices
give independent generators regardless of which worker runs them.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..config import get_config

logger = logging.getLogger(__name__)

T = TypeVar('T')

SEED_LIMIT = 2 ** 64


class SeededStream(BaseModel):
    """Reproducible random stream for one batch of replicates."""

    model_config = ConfigDict(frozen=True)

    scenario_seed: int = Field(..., ge=0, lt=SEED_LIMIT)
    replicate_index: int = Field(0, ge=0)

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        sequence = np.random.SeedSequence(entropy=self.scenario_seed, spawn_key=(self.replicate_index,))
        return np.random.default_rng(sequence)

    def child(self, offset: int) -> "SeededStream":
        """The stream ``offset`` positions further along the same scenario."""
        return SeededStream(scenario_seed=self.scenario_seed, replicate_index=self.replicate_index + offset)


def batch_sizes(replicates: int, batch_size: Optional[int] = None) -> List[int]:
    """Split ``replicates`` into batches of at most ``batch_size``."""
    if replicates < 0:
        raise ValueError(f"replicates must be >= 0, got {replicates}")
    size = get_config().BATCH_SIZE if batch_size is None else batch_size
    if size < 1:
        raise ValueError(f"batch size must be >= 1, got {size}")
    full, rest = divmod(replicates, size)
    return [size] * full + ([rest] if rest else [])


def run_batches(task: Callable[[int], T], n_batches: int, workers: Optional[int] = None) -> List[T]:
    """Run ``task(0) .. task(n_batches - 1)`` and return results in index order.

    With more than one worker the batches go to a process pool; ``task``
    must then be picklable (a module-level function or a ``functools.partial``
    of one).
    """
    workers = get_config().DEFAULT_WORKERS if workers is None else workers
    if workers <= 1 or n_batches <= 1:
        return [task(i) for i in range(n_batches)]
    logger.info(f"Scheduling {n_batches} batches on {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(n_batches)))
