"""
Replicate fan-out.

Replicates run on a thread pool and come back in replicate order, so any
aggregation over the returned list is independent of the thread count.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar

T = TypeVar("T")


def map_replicates(fn: Callable[[int], T], count: int, threads: int = 1) -> List[T]:
    """Evaluate fn(0..count-1), in parallel when threads > 1."""
    if count <= 0:
        return []
    if threads <= 1 or count == 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=min(threads, count)) as pool:
        return list(pool.map(fn, range(count)))
