"""Seed derivation and the scene worker pool shared by the batch subcommands."""

import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Callable, List, Sequence, TypeVar

logger = logging.getLogger(__name__)

J = TypeVar("J")
R = TypeVar("R")

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One output of the SplitMix64 generator seeded with ``x``."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base: int, index: int) -> int:
    """Seed of item ``index`` of a run seeded with ``base``: ``base XOR splitmix64(index)``."""
    return (base & _MASK64) ^ splitmix64(index)


def map_jobs(fn: Callable[[J], R], jobs: Sequence[J], workers: int = 1) -> List[R]:
    """Apply ``fn`` to every job, in a process pool when ``workers > 1``.

    Results come back in job order whatever the completion order. Workers are spawned, not
    forked, so torch state of the parent is never shared.

    Args:
        fn: Picklable top-level function
        jobs: Picklable job descriptions
        workers: Pool size

    Returns:
        ``[fn(job) for job in jobs]``
    """
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]

    results: List[R] = [None] * len(jobs)  # type: ignore[list-item]
    context = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs)), mp_context=context) as pool:
        futures = {pool.submit(fn, job): i for i, job in enumerate(jobs)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    logger.debug("pool finished", extra={"jobs": len(jobs), "workers": workers})
    return results
