"""Worker pool sized by the ``CONEKIT_THREADS`` environment variable."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    raw = os.environ.get("CONEKIT_THREADS", "")
    cap = os.cpu_count() or 1
    if raw.strip():
        try:
            return max(1, min(int(raw), cap))
        except ValueError:
            raise ValueError(f"CONEKIT_THREADS must be an integer, got {raw!r}") from None
    return cap


def parallel_map(fn, items):
    """``list(map(fn, items))``, threaded when more than one worker is allowed.

    Results keep input order, so output is independent of the worker count.
    """
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
