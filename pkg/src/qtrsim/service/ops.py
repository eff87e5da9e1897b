"""Service operations: one function per endpoint, shared by the FastAPI
routes and the CLI's in-process mode."""

from __future__ import annotations

import math

import numpy as np

from .. import analytics, bench, dynamics, fitting, gridio, model, spectrum
from . import schemas


def _params(req: schemas.ParamsRequest) -> model.SystemParams:
    return model.params_from_mapping(req.params)


def run_analytics(req: schemas.AnalyticsRequest) -> schemas.AnalyticsResponse:
    p = _params(req)
    d = analytics.derived_quantities(p)
    return schemas.AnalyticsResponse(
        f_q_ghz=d.f_q_ghz,
        f_res_ghz=d.f_res_ghz,
        f_tls_ghz=d.f_tls_ghz,
        delta_qr_mhz=d.delta_qr_mhz,
        delta_qt_mhz=d.delta_qt_mhz,
        chi_mhz=d.chi_mhz,
        g_eff_mhz=d.g_eff_mhz,
        v_rms_v=d.v_rms_v,
        field_v_per_m=d.field_v_per_m,
        p_bar_ea=d.p_bar_ea,
        c_tot_ff=d.c_tot_ff,
        e_c_ghz=d.e_c_ghz,
        readout_failure_v=list(d.readout_failure_v),
        t1_study=[
            schemas.T1StudyRowOut(
                convention=row.convention.value,
                t1_us={f"{k:g}": v for k, v in row.t1_us.items()},
                reproduces_published_range=row.reproduces_published_range,
            )
            for row in d.t1_study
        ],
        warnings=[
            schemas.RegimeWarningOut(code=w.code, message=w.message, ratio=w.ratio)
            for w in d.warnings
        ],
    )


def run_spectrum(req: schemas.SpectrumRequest) -> schemas.SpectrumResponse:
    p = _params(req)
    sweep = spectrum.SweepSpec(req.axis, tuple(req.sweep.values()))
    catalogs = spectrum.sweep_transitions(
        p, sweep, (req.f_start, req.f_stop),
        max_photons=req.max_photons,
        ground_only=req.ground_only,
        weight_floor=req.weight_floor,
        workers=req.workers,
    )
    rows = [
        schemas.TransitionRow(
            sweep_value=cat.sweep_value, freq_ghz=t.freq, n_photons=t.n_photons,
            weight=t.weight, from_label=t.from_label, to_label=t.to_label,
        )
        for cat in catalogs for t in cat.transitions
    ]
    meta = {
        "axis": req.axis,
        "max_photons": str(req.max_photons),
        "ground_only": str(req.ground_only),
        "weight_floor": repr(req.weight_floor),
        "f_window_ghz": f"{req.f_start!r}:{req.f_stop!r}",
        **{k: repr(v) for k, v in sorted(model.params_to_mapping(p).items())},
    }
    return schemas.SpectrumResponse(rows=rows, metadata=meta)


def run_grid(req: schemas.GridRequest, progress=None) -> schemas.GridResponse:
    """`progress(done, total)` fires per completed row segment when the
    request is executed in-process; the HTTP route does not stream."""
    p = _params(req)
    grid = dynamics.spectroscopy_grid(
        p,
        req.sweep.values(),
        req.freq.values(),
        req.amplitude_mhz,
        criterion=dynamics.SteadyStateCriterion(window=req.window, epsilon=req.epsilon),
        t_max=req.t_max,
        rtol=req.rtol,
        atol=req.atol,
        method=req.method,
        workers=req.workers,
        progress=progress,
    )
    values = [[None if math.isnan(v) else float(v) for v in row] for row in grid.values]
    meta = {k: str(v) for k, v in grid.metadata.items()}
    meta.update({k: repr(v) for k, v in sorted(model.params_to_mapping(p).items())})
    return schemas.GridResponse(
        sweep_values=[float(v) for v in grid.sweep_values],
        freq_values=[float(f) for f in grid.freq_values],
        values=values,
        metadata=meta,
    )


def run_line_scan(req: schemas.LineScanRequest) -> schemas.LineScanResponse:
    p = _params(req)
    scan = dynamics.scan_line(
        p, req.amplitude_mhz, (req.f_start, req.f_stop), points=req.points,
        criterion=dynamics.SteadyStateCriterion(window=req.window, epsilon=req.epsilon),
        t_max=req.t_max, method=req.method,
    )
    return schemas.LineScanResponse(
        freqs=[float(f) for f in scan.freqs],
        response=[float(v) for v in scan.response],
        center_ghz=scan.center_ghz,
        fwhm_mhz=scan.fwhm_mhz,
        ok=scan.ok,
    )


def run_fit(req: schemas.FitRequest) -> schemas.FitResponse:
    p = _params(req)
    observations = tuple(
        fitting.PeakObservation(
            sweep_value=o.sweep_value, freq=o.freq_ghz, amplitude=o.amplitude,
            fwhm_mhz=o.fwhm_mhz, n_photons=o.n_photons,
        )
        for o in req.observations
    )
    weights = None
    if req.amplitude_weighting:
        weights = tuple(o.amplitude for o in req.observations)
    problem = fitting.FitProblem(
        base_params=p,
        observations=observations,
        free_names=tuple(req.free),
        bounds={k: (float(lo), float(hi)) for k, (lo, hi) in req.bounds.items()},
        freq_window=(req.f_start, req.f_stop),
        max_photons=req.max_photons,
        weight_floor=req.weight_floor,
        weights=weights,
    )
    strategy = fitting.FitStrategy(multistart=req.multistart, rng_seed=req.rng_seed)
    result = fitting.fit(problem, req.seed, strategy)
    return schemas.FitResponse(
        best=result.best_values,
        uncertainties=result.uncertainties,
        loss=result.loss,
        residual_rms_mhz=result.residual_rms_mhz,
        residuals_mhz=[float(r) for r in result.residuals_mhz],
        converged=result.converged,
        n_sentinel=result.n_sentinel,
        n_starts=result.n_starts,
        trace=[float(v) for v in result.trace],
        params_text=model.format_params(result.best_params),
    )


def run_locate_failure(req: schemas.LocateFailureRequest) -> schemas.LocateFailureResponse:
    p = _params(req)
    return schemas.LocateFailureResponse(
        f_res_ghz=p.resonator.f_res,
        delta0_ghz=p.tls.delta0,
        voltages=list(analytics.readout_failure_voltages(p)),
    )


def run_bench(req: schemas.BenchRequest) -> schemas.BenchResponse:
    p = _params(req)
    config = bench.BenchConfig(
        dims=tuple((int(a), int(b)) for a, b in req.dims),
        workers=tuple(int(w) for w in req.workers),
        cells=req.cells,
        t_max=req.t_max,
        amplitude_mhz=req.amplitude_mhz,
    )
    return schemas.BenchResponse(rows=bench.run_bench(p, config))
