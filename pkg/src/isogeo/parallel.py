"""Ordered, worker-count independent parallel map.

All Monte Carlo work is split into chunks whose boundaries depend only on the
problem size, never on the number of workers. Results are always returned in
chunk order so reductions are bit-reproducible for any pool size.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

_workers: int | None = None
_local = threading.local()


def get_workers() -> int:
    if _workers is not None:
        return _workers
    env = os.environ.get("ISOGEO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def set_workers(n: int | None) -> None:
    """Set the pool size (``None`` falls back to ``ISOGEO_THREADS`` or 1)."""
    global _workers
    if n is not None and n < 1:
        raise ValueError("worker count must be >= 1")
    _workers = n


@contextmanager
def workers(n: int | None):
    previous = _workers
    set_workers(n)
    try:
        yield
    finally:
        set_workers(previous)


def _run_in_worker(fn, item):
    _local.inside = True
    try:
        return fn(item)
    finally:
        _local.inside = False


def ordered_map(fn, items) -> list:
    """``[fn(x) for x in items]``, executed on the pool, in input order.

    Calls made from inside a worker run serially so nested maps never wait on
    their own pool.
    """
    items = list(items)
    n = get_workers()
    if n == 1 or len(items) <= 1 or getattr(_local, "inside", False):
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(lambda x: _run_in_worker(fn, x), items))
