"""FastAPI application exposing the simulator over HTTP.

Run with ``qtrsim serve`` or ``uvicorn qtrsim.service.app:app``. Domain
validation failures (bad parameter keys, unphysical values) map to 400
with the offending message; schema violations are FastAPI's usual 422.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..model import ParamError, ParamFileError
from . import ops, schemas

app = FastAPI(
    title="qtrsim",
    description="Transmon / readout-resonator / TLS-defect spectroscopy "
                "simulator and fitting service",
    version=__version__,
)


def _guard(fn, req):
    try:
        return fn(req)
    except (ParamFileError, ParamError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


@app.get("/health", response_model=schemas.HealthResponse)
def health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)


@app.post("/analytics", response_model=schemas.AnalyticsResponse)
def analytics_endpoint(req: schemas.AnalyticsRequest) -> schemas.AnalyticsResponse:
    return _guard(ops.run_analytics, req)


@app.post("/spectrum", response_model=schemas.SpectrumResponse)
def spectrum_endpoint(req: schemas.SpectrumRequest) -> schemas.SpectrumResponse:
    return _guard(ops.run_spectrum, req)


@app.post("/grid", response_model=schemas.GridResponse)
def grid_endpoint(req: schemas.GridRequest) -> schemas.GridResponse:
    return _guard(ops.run_grid, req)


@app.post("/line-scan", response_model=schemas.LineScanResponse)
def line_scan_endpoint(req: schemas.LineScanRequest) -> schemas.LineScanResponse:
    return _guard(ops.run_line_scan, req)


@app.post("/fit", response_model=schemas.FitResponse)
def fit_endpoint(req: schemas.FitRequest) -> schemas.FitResponse:
    return _guard(ops.run_fit, req)


@app.post("/locate-failure", response_model=schemas.LocateFailureResponse)
def locate_failure_endpoint(req: schemas.LocateFailureRequest) -> schemas.LocateFailureResponse:
    return _guard(ops.run_locate_failure, req)


@app.post("/bench", response_model=schemas.BenchResponse)
def bench_endpoint(req: schemas.BenchRequest) -> schemas.BenchResponse:
    return _guard(ops.run_bench, req)
