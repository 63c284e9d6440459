"""Thread-count and determinism controls.

BLAS reductions may change order with the number of threads, so a
deterministic run pins every native thread pool to a single thread.
"""

from __future__ import annotations

import contextlib
import os

from threadpoolctl import threadpool_limits

THREADS_ENV = "ADACONV_THREADS"


def default_threads() -> int | None:
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return None
    threads = int(value)
    if threads < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {value!r}")
    return threads


@contextlib.contextmanager
def compute_context(deterministic: bool = False, threads: int | None = None):
    """Limit native thread pools for the duration of the block.

    ``deterministic`` forces a single thread so every accumulation runs in a
    fixed order; otherwise ``threads`` (or ``ADACONV_THREADS``) applies.
    """
    if deterministic:
        limit = 1
    else:
        limit = threads if threads is not None else default_threads()
    if limit is None:
        yield
        return
    with threadpool_limits(limits=limit):
        yield
