import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from lcpformer.errors import LcpValidationError

# Environment variable capping worker threads
THREADS_ENV = "LCP_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def worker_count(requested: int = 1) -> int:
    """
    Number of workers to use: the requested count, capped by LCP_THREADS when set.
    """
    count = max(1, requested)
    cap = os.environ.get(THREADS_ENV)
    if cap is not None and len(cap):
        if not cap.isdigit() or int(cap) < 1:
            raise LcpValidationError(f"{THREADS_ENV} must be a positive integer (got '{cap}')")
        count = min(count, int(cap))
    return count


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """
    Apply fn to every item, possibly on several threads; results always come back in input order.
    """
    items = list(items)
    workers = worker_count(workers)
    if workers == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
