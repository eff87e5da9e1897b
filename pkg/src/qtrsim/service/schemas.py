"""Pydantic request/response models for the qtrsim service.

The CLI builds these same models and either POSTs them to a running
service or executes them in-process, so the wire format and the local
API are identical by construction. Physical parameters travel as the
flat key/value mapping of the parameter-file format; unknown keys are
rejected server-side with the offending names.
"""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator


class AxisSpec(BaseModel):
    start: float
    stop: float
    points: int = Field(ge=2)

    def values(self) -> list[float]:
        return [float(v) for v in np.linspace(self.start, self.stop, self.points)]


class ParamsRequest(BaseModel):
    params: dict[str, float]


class HealthResponse(BaseModel):
    status: str
    version: str


# -- analytics --------------------------------------------------------------

class AnalyticsRequest(ParamsRequest):
    pass


class RegimeWarningOut(BaseModel):
    code: str
    message: str
    ratio: float


class T1StudyRowOut(BaseModel):
    convention: str
    t1_us: dict[str, float]            # delta in MHz (as string key) -> T1
    reproduces_published_range: bool


class AnalyticsResponse(BaseModel):
    f_q_ghz: float
    f_res_ghz: float
    f_tls_ghz: float
    delta_qr_mhz: float
    delta_qt_mhz: float
    chi_mhz: float
    g_eff_mhz: float
    v_rms_v: float
    field_v_per_m: float
    p_bar_ea: float
    c_tot_ff: float
    e_c_ghz: float
    readout_failure_v: list[float]
    t1_study: list[T1StudyRowOut]
    warnings: list[RegimeWarningOut]


# -- eigenvalue spectroscopy --------------------------------------------------

class SpectrumRequest(ParamsRequest):
    axis: Literal["piezo_v", "flux"] = "piezo_v"
    sweep: AxisSpec
    f_start: float
    f_stop: float
    max_photons: int = Field(default=3, ge=1, le=6)
    ground_only: bool = True
    weight_floor: float = 1e-3
    workers: Optional[int] = None

    @field_validator("f_stop")
    @classmethod
    def _window_ordered(cls, v, info):
        if "f_start" in info.data and v <= info.data["f_start"]:
            raise ValueError("f_stop must exceed f_start")
        return v


class TransitionRow(BaseModel):
    sweep_value: float
    freq_ghz: float
    n_photons: int
    weight: float
    from_label: str
    to_label: str


class SpectrumResponse(BaseModel):
    rows: list[TransitionRow]
    metadata: dict[str, str]


# -- driven spectroscopy grid -------------------------------------------------

class GridRequest(ParamsRequest):
    sweep: AxisSpec
    freq: AxisSpec
    amplitude_mhz: float = Field(gt=0)
    t_max: float = Field(default=20.0, gt=0)
    window: float = Field(default=2.0, gt=0)
    epsilon: float = Field(default=1e-3, gt=0)
    rtol: float = Field(default=1e-8, gt=0)
    atol: float = Field(default=1e-11, gt=0)
    method: Literal["rk45", "bdf", "expm", "auto"] = "auto"
    workers: Optional[int] = None


class GridResponse(BaseModel):
    sweep_values: list[float]
    freq_values: list[float]
    values: list[list[Optional[float]]]    # None encodes a NaN cell
    metadata: dict[str, str]


class LineScanRequest(ParamsRequest):
    amplitude_mhz: float = Field(gt=0)
    f_start: float
    f_stop: float
    points: int = Field(default=41, ge=5)
    t_max: float = Field(default=20.0, gt=0)
    window: float = Field(default=2.0, gt=0)
    epsilon: float = Field(default=1e-3, gt=0)
    method: Literal["rk45", "bdf", "expm", "auto"] = "auto"


class LineScanResponse(BaseModel):
    freqs: list[float]
    response: list[float]
    center_ghz: float
    fwhm_mhz: float
    ok: bool


# -- fitting ------------------------------------------------------------------

class PeakIn(BaseModel):
    sweep_value: float
    freq_ghz: float
    amplitude: float = 1.0
    fwhm_mhz: float = Field(default=3.0, gt=0)
    n_photons: Optional[int] = None


class FitRequest(ParamsRequest):
    observations: list[PeakIn]
    free: list[str]
    bounds: dict[str, tuple[float, float]]
    seed: dict[str, float]
    f_start: float
    f_stop: float
    max_photons: int = Field(default=3, ge=1, le=6)
    weight_floor: float = 1e-3
    multistart: int = Field(default=0, ge=0)
    rng_seed: int = 0
    amplitude_weighting: bool = False


class FitResponse(BaseModel):
    best: dict[str, float]
    uncertainties: dict[str, float]
    loss: float
    residual_rms_mhz: float
    residuals_mhz: list[float]
    converged: bool
    n_sentinel: int
    n_starts: int
    trace: list[float]
    params_text: str                   # best-fit parameter file, reusable


# -- closed-form failure locator ----------------------------------------------

class LocateFailureRequest(ParamsRequest):
    pass


class LocateFailureResponse(BaseModel):
    f_res_ghz: float
    delta0_ghz: float
    voltages: list[float]


# -- benchmark ------------------------------------------------------------------

class BenchRequest(ParamsRequest):
    dims: list[tuple[int, int]] = [(2, 2), (4, 4), (6, 6)]
    workers: list[int] = [1, 2]
    cells: int = Field(default=8, ge=1)
    t_max: float = Field(default=2.0, gt=0)
    amplitude_mhz: float = Field(default=2.0, gt=0)


class BenchResponse(BaseModel):
    rows: list[dict]
