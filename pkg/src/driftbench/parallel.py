"""Frame-level worker pool with deterministic ordered merging."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def chunked_map(fn: Callable[[T], R], items: Sequence[T], threads: int) -> list[R]:
    """Apply fn to every item on a pool of workers; results keep item order.

    Items are split into one contiguous chunk per worker, so the result is
    identical to the sequential map for any thread count.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    n_chunks = min(threads, len(items))
    step = (len(items) + n_chunks - 1) // n_chunks
    chunks = [items[i : i + step] for i in range(0, len(items), step)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda chunk: [fn(x) for x in chunk], chunks)
        return [y for part in parts for y in part]
