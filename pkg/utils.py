import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = 'SWIMMER_THREADS'


class RowTimer:
    """Wall time of the last row, running mean and worst case."""
    def __init__(self):
        self.last = 0.
        self.total = 0.
        self.worst = 0.
        self.count = 0
        self._start = None

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.last = time.perf_counter() - self._start
        self.total += self.last
        self.worst = max(self.worst, self.last)
        self.count += 1
        return False

    @property
    def avg(self):
        return self.total / self.count if self.count else 0.


def get_outdir(path, *paths):
    outdir = os.path.join(path, *paths)
    if not os.path.exists(outdir):
        os.makedirs(outdir)
    return outdir


def thread_count(default=1):
    """Row / multistart parallelism cap from the environment."""
    value = os.environ.get(THREADS_ENV)
    if not value:
        return default
    try:
        n = int(value)
    except ValueError:
        raise ValueError('{} must be a positive integer, got {!r}'.format(THREADS_ENV, value))
    if n < 1:
        raise ValueError('{} must be a positive integer, got {!r}'.format(THREADS_ENV, value))
    return n


def map_rows(fn, rows, threads=1):
    """Apply fn to every row, in order, on up to `threads` worker threads."""
    rows = list(rows)
    timer = RowTimer()

    def _timed(row):
        with RowTimer() as t:
            out = fn(row)
        return out, t.last

    if threads > 1 and len(rows) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_timed, rows))
    else:
        results = [_timed(r) for r in rows]
    for i, (_, elapsed) in enumerate(results):
        timer.total += elapsed
        timer.worst = max(timer.worst, elapsed)
        timer.count += 1
        logging.info('Row [{}/{}] Time: {:.3f}s (avg {:.3f}s, worst {:.3f}s)'.format(
            i + 1, len(rows), elapsed, timer.avg, timer.worst))
    return [out for out, _ in results]
