"""Deterministic chunked parallelism.

Work is split into fixed-size chunks regardless of thread count, and each
chunk writes to a disjoint output slice, so results are byte-identical for
any ``threads`` value. LIST_THREADS overrides the requested count.
"""

import os
from concurrent.futures import ThreadPoolExecutor


def effective_threads(requested=None):
    env = os.environ.get("LIST_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    if requested is None:
        return 1
    return max(1, int(requested))


def run_chunked(fn, n, threads=1, chunk=65536):
    """Call fn(start, stop) for fixed chunk boundaries, possibly in parallel.

    fn must write results into preallocated disjoint slices; return values
    are ignored. Chunk boundaries never depend on the thread count.
    """
    threads = effective_threads(threads)
    spans = [(s, min(s + chunk, n)) for s in range(0, n, chunk)]
    if threads <= 1 or len(spans) <= 1:
        for s, e in spans:
            fn(s, e)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda span: fn(*span), spans))
