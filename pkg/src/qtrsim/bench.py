"""Throughput benchmark for the driven-spectroscopy engine.

Simulating interacting multi-level quantum systems is CPU-bound and the
production grids are large, so the engine must parallelize well; the
benchmark measures steady-state cells/second across Hilbert-space sizes
and worker counts, plus the empirical scaling exponent of the per-cell
cost with the total dimension.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import model
from .dynamics import SteadyStateCriterion, spectroscopy_grid


@dataclass(frozen=True)
class BenchConfig:
    dims: tuple[tuple[int, int], ...] = ((2, 2), (4, 4), (6, 6))
    workers: tuple[int, ...] = (1, 2)
    cells: int = 8
    t_max: float = 2.0
    amplitude_mhz: float = 2.0
    repeat_check: bool = True


def _bench_grid(p: model.SystemParams, n_q: int, n_r: int, cells: int,
                workers: int, t_max: float, amplitude: float):
    pb = model.with_levels(p, n_q, n_r)
    f_q = model.qubit_frequency(pb)
    freqs = np.linspace(f_q - 0.03, f_q + 0.03, cells)
    start = time.perf_counter()
    grid = spectroscopy_grid(
        pb, [pb.piezo_v], freqs, amplitude,
        criterion=SteadyStateCriterion(window=0.5, epsilon=1e-4),
        t_max=t_max, workers=workers, method="auto",
    )
    wall = time.perf_counter() - start
    return grid, wall


def run_bench(p: model.SystemParams, config: BenchConfig | None = None) -> list[dict]:
    """JSON-ready benchmark rows: one per (dims, workers) combination,
    one with the fitted dimension-scaling exponent, one determinism check.

    BLAS is pinned to one thread for the whole measurement so the
    reported scaling is that of the worker pool, not of library-internal
    threading.
    """
    if config is None:
        config = BenchConfig()
    try:
        import threadpoolctl

        limit = threadpoolctl.threadpool_limits(1)
    except Exception:  # pragma: no cover
        limit = None
    try:
        return _run_bench_rows(p, config)
    finally:
        if limit is not None:
            limit.unregister()


def _run_bench_rows(p: model.SystemParams, config: BenchConfig) -> list[dict]:
    rows: list[dict] = []
    per_cell_cost: list[tuple[int, float]] = []

    for n_q, n_r in config.dims:
        base_wall = None
        for workers in config.workers:
            grid, wall = _bench_grid(p, n_q, n_r, config.cells, workers,
                                     config.t_max, config.amplitude_mhz)
            if workers == config.workers[0]:
                base_wall = wall
            total_dim = n_q * n_r * 2
            rows.append({
                "kind": "grid",
                "dims": [n_q, n_r, 2],
                "total_dim": total_dim,
                "workers": workers,
                "cells": config.cells,
                "wall_s": round(wall, 4),
                "cells_per_s": round(config.cells / wall, 4),
                "speedup_vs_first": round(base_wall / wall, 3),
                "nan_cells": int(grid.metadata["nan_cells"]),
            })
        per_cell_cost.append((n_q * n_r * 2, base_wall / config.cells))

    if len(per_cell_cost) >= 2:
        dims_arr = np.log([d for d, _ in per_cell_cost])
        cost_arr = np.log([c for _, c in per_cell_cost])
        exponent = float(np.polyfit(dims_arr, cost_arr, 1)[0])
        rows.append({"kind": "scaling", "exponent": round(exponent, 3),
                     "samples": per_cell_cost})

    if config.repeat_check:
        n_q, n_r = config.dims[0]
        g1, _ = _bench_grid(p, n_q, n_r, min(config.cells, 4), 1,
                            config.t_max, config.amplitude_mhz)
        g2, _ = _bench_grid(p, n_q, n_r, min(config.cells, 4), 1,
                            config.t_max, config.amplitude_mhz)
        identical = bool(np.array_equal(g1.values, g2.values, equal_nan=True))
        rows.append({"kind": "determinism", "identical": identical})
    return rows
