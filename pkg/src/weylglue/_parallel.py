"""Deterministic chunked parallel map used by the quadrature routines."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "WEYL_GLUE_THREADS"


def thread_count() -> int:
    """Worker cap from ``WEYL_GLUE_THREADS`` (default 1, invalid values fall back to 1)."""
    raw = os.environ.get(THREADS_ENV, "1").strip()
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)


def ordered_map(func: Callable[[T], R], items: Sequence[T], threads: int | None = None) -> list[R]:
    """Apply ``func`` to every item and return results in input order.

    Chunking is decided by the caller, never by the worker count, so reductions
    over the returned list are bit-identical for any number of threads.
    """
    threads = thread_count() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(func, items))


def chunk_slices(total: int, size: int) -> list[slice]:
    return [slice(start, min(start + size, total)) for start in range(0, total, size)]
