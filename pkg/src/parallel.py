"""Chunked fan-out over worker processes with results in chunk order"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Optional, TypeVar

from loguru import logger

from config.settings import get_settings

T = TypeVar("T")


def chunk_bounds(total: int, chunk_size: int) -> list[tuple[int, int]]:
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    return [(lo, min(lo + chunk_size, total)) for lo in range(0, total, chunk_size)]


def map_chunks(
    func: Callable[[int, int], T],
    total: int,
    chunk_size: Optional[int] = None,
    workers: Optional[int] = None,
) -> list[T]:
    """
    Apply func(lo, hi) to consecutive index ranges covering [0, total)

    Args:
        func: Picklable callable (module-level function or functools.partial)
        total: Size of the index space
        chunk_size: Range width, defaults to settings.solver_chunk_size
        workers: Process count, defaults to settings.workers; 1 runs inline

    Returns:
        One result per chunk, in index order whatever the worker count
    """
    settings = get_settings()
    bounds = chunk_bounds(total, chunk_size or settings.solver_chunk_size)
    workers = workers or settings.workers
    if workers <= 1 or len(bounds) <= 1:
        return [func(lo, hi) for lo, hi in bounds]

    logger.debug(f"Fanning {len(bounds)} chunks out to {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as executor:
        los, his = zip(*bounds)
        return list(executor.map(func, los, his))
