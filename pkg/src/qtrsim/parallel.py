"""Bounded worker-pool helpers.

Grid cells and sweep points are embarrassingly parallel; the helpers
here run a pure top-level function over a task list with a bounded
number of worker processes and return results in task order, so output
is deterministic regardless of the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "QTRSIM_WORKERS"

_BLAS_LIMIT = None


def _single_threaded_blas() -> None:
    """Pin BLAS to one thread inside worker processes.

    Process-level parallelism owns the cores; letting every worker's
    BLAS spawn its own thread pool oversubscribes them and destroys the
    scaling the pool exists to provide.
    """
    global _BLAS_LIMIT
    try:
        import threadpoolctl

        _BLAS_LIMIT = threadpoolctl.threadpool_limits(1)
    except Exception:  # pragma: no cover - best effort only
        os.environ["OMP_NUM_THREADS"] = "1"


def resolve_workers(requested: int | None = None) -> int:
    """Worker count: explicit argument, else QTRSIM_WORKERS env, else 1."""
    if requested is None:
        env = os.environ.get(WORKERS_ENV, "").strip()
        requested = int(env) if env else 1
    if requested < 1:
        raise ValueError(f"worker count must be >= 1, got {requested}")
    return requested


def parallel_map(
    fn: Callable[[T], R],
    tasks: Sequence[T],
    workers: int | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> list[R]:
    """Map `fn` over `tasks`, preserving task order in the result list.

    With workers == 1 this is a plain in-process map (no fork overhead,
    easier debugging). `progress(done, total)` is invoked after each
    completed task.
    """
    n = resolve_workers(workers)
    total = len(tasks)
    if n == 1 or total <= 1:
        out = []
        for i, task in enumerate(tasks):
            out.append(fn(task))
            if progress is not None:
                progress(i + 1, total)
        return out

    results: list = [None] * total
    with ProcessPoolExecutor(max_workers=min(n, total),
                             initializer=_single_threaded_blas) as pool:
        futures = {pool.submit(fn, task): i for i, task in enumerate(tasks)}
        pending = set(futures)
        done_count = 0
        while pending:
            done, pending = wait(pending, return_when=FIRST_COMPLETED)
            for fut in done:
                results[futures[fut]] = fut.result()
                done_count += 1
                if progress is not None:
                    progress(done_count, total)
    return results
