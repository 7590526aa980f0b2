import os
from concurrent.futures import ProcessPoolExecutor

THREADS_ENV = "CONEBEAM_POSE_THREADS"


def max_workers():
    """Worker cap from ``CONEBEAM_POSE_THREADS`` (default 1, i.e. serial)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items, workers=None):
    """Order-preserving map; runs in a process pool when more than one worker is allowed."""
    items = list(items)
    workers = max_workers() if workers is None else workers
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    chunksize = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
