"""Thread-pool helpers.

Work is split into contiguous index chunks whose boundaries depend only on
the problem size, never on the thread count, and every chunk writes its own
slice of a preallocated output.  Results are therefore identical for any
pool size.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

CHUNK = 4096


def thread_count() -> int:
    raw = os.environ.get("BDSDE_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def chunks(n: int, size: int = CHUNK):
    return [slice(lo, min(n, lo + size)) for lo in range(0, n, size)]


def run_chunks(fn, n: int, threads: int | None = None, size: int = CHUNK) -> None:
    """Call ``fn(slice)`` over fixed-size chunks of ``range(n)``."""
    parts = chunks(n, size)
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(parts) <= 1:
        for s in parts:
            fn(s)
        return
    with ThreadPoolExecutor(max_workers=min(threads, len(parts))) as pool:
        for fut in [pool.submit(fn, s) for s in parts]:
            fut.result()
