"""Peak extraction from spectroscopy grids and least-squares parameter
fitting against eigenvalue transition positions.

The workflow mirrors the characterization procedure the simulator
exists to support: extract resonance peak positions per sweep column,
assign photon numbers, then minimize the squared deviation between
observed and calculated multi-photon transition frequencies over a
named subset of system parameters (simplex first, damped least-squares
polish on finite-difference Jacobians).
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.optimize
from scipy.ndimage import uniform_filter1d

from . import model, spectrum
from .analytics import effective_coupling
from .dynamics import SpectroscopyGrid
from .parallel import parallel_map

log = logging.getLogger(__name__)

# residual (GHz) reported when the model catalog is empty in the window;
# large enough to repel the optimizer, finite enough to keep it alive
SENTINEL_RESIDUAL = 1.0


@dataclass(frozen=True)
class PeakObservation:
    sweep_value: float
    freq: float                    # GHz
    amplitude: float = 1.0         # signal units
    fwhm_mhz: float = 3.0
    n_photons: int | None = None   # optional photon-number assignment

    def __post_init__(self):
        if self.fwhm_mhz <= 0:
            raise ValueError(f"fwhm must be positive, got {self.fwhm_mhz}")


def extract_peaks(
    grid: SpectroscopyGrid,
    prominence: float = 0.1,
    smooth_width: int = 0,
    max_peaks: int | None = None,
) -> list[PeakObservation]:
    """Local maxima per sweep column with sub-bin centers and FWHM.

    `prominence` is relative to the column maximum, which makes the
    result invariant under rescaling the grid by any positive constant.
    Sub-bin centers come from a three-point parabola, widths from
    half-maximum crossings. NaN cells are skipped; an all-NaN column is
    skipped with a log entry.
    """
    from scipy.signal import find_peaks

    out: list[PeakObservation] = []
    freqs = grid.freq_values
    df = freqs[1] - freqs[0] if len(freqs) > 1 else 1.0
    for i, sval in enumerate(grid.sweep_values):
        row = grid.values[i]
        finite = np.isfinite(row)
        if not finite.any():
            log.warning("grid column at sweep value %.6g is all NaN; skipped", sval)
            continue
        col_max = float(np.nanmax(row))
        if col_max <= 0:
            continue
        # peak-find on contiguous finite segments so NaN holes never seed peaks
        peaks_here: list[PeakObservation] = []
        start = 0
        while start < len(row):
            if not finite[start]:
                start += 1
                continue
            stop = start
            while stop < len(row) and finite[stop]:
                stop += 1
            seg = row[start:stop]
            if smooth_width > 1:
                seg = uniform_filter1d(seg, size=smooth_width, mode="nearest")
            idx, _ = find_peaks(seg, prominence=prominence * col_max)
            for k in idx:
                center = freqs[start + k]
                height = float(seg[k])
                if 0 < k < len(seg) - 1:
                    denom = seg[k - 1] - 2 * seg[k] + seg[k + 1]
                    if denom < 0:
                        center = center + 0.5 * (seg[k - 1] - seg[k + 1]) / denom * df
                fwhm_bins = _half_max_width(seg, k)
                peaks_here.append(PeakObservation(
                    sweep_value=float(sval),
                    freq=float(center),
                    amplitude=height,
                    fwhm_mhz=float(fwhm_bins * df * 1e3) if fwhm_bins > 0 else abs(df) * 1e3,
                ))
            start = stop
        peaks_here.sort(key=lambda o: o.amplitude, reverse=True)
        if max_peaks is not None:
            peaks_here = peaks_here[:max_peaks]
        out.extend(sorted(peaks_here, key=lambda o: o.freq))
    return out


def _half_max_width(y: np.ndarray, k: int) -> float:
    """FWHM in bins from linear-interpolated half-maximum crossings."""
    half = 0.5 * y[k]
    left = math.nan
    for i in range(k, 0, -1):
        if y[i - 1] <= half <= y[i]:
            left = (i - 1) + (half - y[i - 1]) / (y[i] - y[i - 1])
            break
    right = math.nan
    for i in range(k, len(y) - 1):
        if y[i + 1] <= half <= y[i]:
            right = i + (y[i] - half) / (y[i] - y[i + 1])
            break
    width = right - left
    return width if math.isfinite(width) else -1.0


# ---------------------------------------------------------------------------
# free-parameter plumbing

_FREE_PARAM_SETTERS: dict[str, Callable[[model.SystemParams, float], model.SystemParams]] = {
    "f_q": lambda p, v: dataclasses.replace(p, f_q=v),
    "E_c": lambda p, v: dataclasses.replace(p, qubit=dataclasses.replace(p.qubit, e_c=v, c_tot=None)),
    "f_res": lambda p, v: dataclasses.replace(p, resonator=dataclasses.replace(p.resonator, f_res=v)),
    "g_qr": lambda p, v: dataclasses.replace(p, resonator=dataclasses.replace(p.resonator, g_qr=v)),
    "delta0": lambda p, v: dataclasses.replace(p, tls=dataclasses.replace(p.tls, delta0=v)),
    "gamma": lambda p, v: dataclasses.replace(p, tls=dataclasses.replace(p.tls, gamma=v)),
    "V0": lambda p, v: dataclasses.replace(p, tls=dataclasses.replace(p.tls, v0=v)),
    "g_x": lambda p, v: dataclasses.replace(p, tls=dataclasses.replace(p.tls, g_x=v)),
    "g_z": lambda p, v: dataclasses.replace(p, tls=dataclasses.replace(p.tls, g_z=v)),
}

FREE_PARAM_NAMES = tuple(_FREE_PARAM_SETTERS)


def apply_free_params(base: model.SystemParams, names: Sequence[str],
                      values: Sequence[float]) -> model.SystemParams:
    p = base
    for name, value in zip(names, values):
        try:
            p = _FREE_PARAM_SETTERS[name](p, float(value))
        except KeyError:
            raise ValueError(
                f"unknown free parameter {name!r}; choose from {FREE_PARAM_NAMES}"
            ) from None
    return p


@dataclass(frozen=True)
class FitProblem:
    """Observations plus the free/fixed split of the parameter set.

    `free_names` select entries of the parameter file key set; every
    other parameter stays at its `base_params` value. The loss is the
    weighted sum of squared differences between each observed frequency
    and the nearest calculated transition (restricted to the observed
    photon number when assigned).
    """

    base_params: model.SystemParams
    observations: tuple[PeakObservation, ...]
    free_names: tuple[str, ...]
    bounds: Mapping[str, tuple[float, float]]
    freq_window: tuple[float, float]
    max_photons: int = 3
    weight_floor: float = 1e-3
    weights: tuple[float, ...] | None = None    # per-peak; default uniform

    def __post_init__(self):
        if not self.observations:
            raise ValueError("fit problem needs at least one observation")
        unknown = [n for n in self.free_names if n not in FREE_PARAM_NAMES]
        if unknown:
            raise ValueError(f"unknown free parameter(s): {unknown}")
        missing = [n for n in self.free_names if n not in self.bounds]
        if missing:
            raise ValueError(f"missing bounds for: {missing}")
        for name, (lo, hi) in self.bounds.items():
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"bounds for {name!r} must be finite with lo < hi")
        if self.weights is not None and len(self.weights) != len(self.observations):
            raise ValueError("per-peak weights must match the observation count")

    def bounds_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.bounds[n][0] for n in self.free_names])
        hi = np.array([self.bounds[n][1] for n in self.free_names])
        return lo, hi

    def weight_vector(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(len(self.observations))
        return np.asarray(self.weights, dtype=float)


def _catalog_cache_key(values: np.ndarray) -> tuple:
    return tuple(float(v) for v in values)


def model_residuals(problem: FitProblem, values: Sequence[float]) -> np.ndarray:
    """Residual vector: observed minus nearest calculated frequency (GHz).

    Observations sharing a sweep value share one eigensolve. An empty
    catalog window yields the sentinel residual so the optimizer keeps
    moving instead of crashing.
    """
    residuals, _ = model_residuals_detailed(problem, values)
    return residuals


def model_residuals_detailed(problem: FitProblem, values: Sequence[float]):
    p = apply_free_params(problem.base_params, problem.free_names, values)
    by_sweep: dict[float, list[int]] = {}
    for k, obs in enumerate(problem.observations):
        by_sweep.setdefault(obs.sweep_value, []).append(k)

    residuals = np.empty(len(problem.observations))
    sentinel = np.zeros(len(problem.observations), dtype=bool)
    for sval, indices in by_sweep.items():
        pv = dataclasses.replace(p, piezo_v=sval)
        cat = spectrum.transition_catalog(
            model.full_hamiltonian(pv),
            model.qubit_drive_operator(pv),
            max_photons=problem.max_photons,
            ground_only=True,
            freq_window=problem.freq_window,
            weight_floor=problem.weight_floor,
            dims=pv.dims,
            sweep_value=sval,
        )
        for k in indices:
            obs = problem.observations[k]
            candidates = [t.freq for t in cat.transitions
                          if obs.n_photons is None or t.n_photons == obs.n_photons]
            if not candidates:
                residuals[k] = SENTINEL_RESIDUAL
                sentinel[k] = True
                continue
            arr = np.asarray(candidates)
            residuals[k] = obs.freq - arr[np.argmin(np.abs(arr - obs.freq))]
    return residuals, sentinel


def fit_loss(problem: FitProblem, values: Sequence[float]) -> float:
    r = model_residuals(problem, values)
    return float(np.sum(problem.weight_vector() * r**2))


@dataclass
class FitResult:
    best_values: dict[str, float]
    best_params: model.SystemParams
    loss: float
    residual_rms_mhz: float
    residuals_mhz: np.ndarray
    trace: list[float]                     # loss per accepted iteration
    converged: bool
    uncertainties: dict[str, float]        # 1-sigma from J^T J curvature
    n_sentinel: int
    n_starts: int = 1


@dataclass(frozen=True)
class FitStrategy:
    nm_maxiter: int = 400
    nm_xatol: float = 1e-8
    nm_fatol: float = 1e-12
    ls_max_nfev: int = 200
    diff_step: float = 1e-6
    multistart: int = 0                    # extra random seeds inside bounds
    rng_seed: int = 0
    workers: int = 1                       # starts run concurrently


def _start_task(args):
    problem, seed, strategy = args
    x, trace, converged, ls = _single_fit(problem, seed, strategy)
    return x, trace, converged, ls


def _single_fit(problem: FitProblem, seed: np.ndarray, strategy: FitStrategy):
    lo, hi = problem.bounds_arrays()
    trace: list[float] = []
    w = problem.weight_vector()
    sqrt_w = np.sqrt(w)

    def loss(x):
        return fit_loss(problem, x)

    nm = scipy.optimize.minimize(
        loss, seed, method="Nelder-Mead",
        bounds=list(zip(lo, hi)),
        options={"maxiter": strategy.nm_maxiter, "xatol": strategy.nm_xatol,
                 "fatol": strategy.nm_fatol},
        callback=lambda xk: trace.append(loss(xk)),
    )
    x0 = np.clip(nm.x, lo, hi)

    def weighted_residuals(x):
        return sqrt_w * model_residuals(problem, x)

    ls = scipy.optimize.least_squares(
        weighted_residuals, x0, bounds=(lo, hi), method="trf",
        diff_step=strategy.diff_step, max_nfev=strategy.ls_max_nfev,
    )
    best = ls.x if 2.0 * ls.cost <= loss(x0) else x0
    trace.append(loss(best))
    converged = bool(nm.success or ls.status > 0)
    return best, trace, converged, ls


def fit(problem: FitProblem, seed_values: Mapping[str, float] | Sequence[float],
        strategy: FitStrategy | None = None) -> FitResult:
    """Minimize the peak-position loss over the free parameters.

    Derivative-free simplex first, then a damped least-squares polish on
    finite-difference Jacobians. `strategy.multistart` adds that many
    bound-uniform random seeds (deterministic for a given rng_seed); the
    best local minimum wins. Never raises on an iteration cap; the
    result carries a convergence flag instead.
    """
    if strategy is None:
        strategy = FitStrategy()
    if isinstance(seed_values, Mapping):
        seed = np.array([float(seed_values[n]) for n in problem.free_names])
    else:
        seed = np.asarray(seed_values, dtype=float)
    lo, hi = problem.bounds_arrays()
    if np.any(seed < lo) or np.any(seed > hi):
        raise ValueError("seed values must lie inside the bounds")

    seeds = [seed]
    if strategy.multistart > 0:
        rng = np.random.default_rng(strategy.rng_seed)
        seeds += [rng.uniform(lo, hi) for _ in range(strategy.multistart)]

    outcomes = parallel_map(_start_task, [(problem, s, strategy) for s in seeds],
                            workers=strategy.workers)
    best = None
    for x, trace, converged, ls in outcomes:
        value = fit_loss(problem, x)
        if best is None or value < best[1]:
            best = (x, value, trace, converged, ls)
    x, value, trace, converged, ls = best

    residuals, sentinel = model_residuals_detailed(problem, x)
    w = problem.weight_vector()
    rms = math.sqrt(float(np.sum(w * residuals**2)) / float(np.sum(w)))
    uncertainties = _curvature_uncertainties(problem, ls, len(x))
    p_best = apply_free_params(problem.base_params, problem.free_names, x)
    return FitResult(
        best_values={n: float(v) for n, v in zip(problem.free_names, x)},
        best_params=p_best,
        loss=value,
        residual_rms_mhz=rms * 1e3,
        residuals_mhz=residuals * 1e3,
        trace=trace,
        converged=converged,
        uncertainties=uncertainties,
        n_sentinel=int(sentinel.sum()),
        n_starts=len(seeds),
    )


def _curvature_uncertainties(problem: FitProblem, ls, n_params: int) -> dict[str, float]:
    """1-sigma estimates from the finite-difference Jacobian at the optimum,
    cov = (J^T J)^-1 * chi^2 / (N - p)."""
    n_obs = len(problem.observations)
    dof = max(n_obs - n_params, 1)
    try:
        jtj = ls.jac.T @ ls.jac
        cov = np.linalg.inv(jtj) * (2.0 * ls.cost / dof)
        sigmas = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        sigmas = np.full(n_params, math.inf)
    return {n: float(s) for n, s in zip(problem.free_names, sigmas)}


# ---------------------------------------------------------------------------
# synthetic data and the derived experiments

def synthetic_observations(
    p: model.SystemParams,
    sweep_values: Sequence[float],
    freq_window: tuple[float, float],
    max_photons: int = 2,
    weight_floor: float = 1e-2,
    fwhm_mhz: float = 3.0,
    noise_sigma_mhz: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list[PeakObservation]:
    """Peak observations generated from the model itself (optionally with
    Gaussian frequency noise), with photon numbers assigned."""
    sweep = spectrum.SweepSpec("piezo_v", tuple(sweep_values))
    cats = spectrum.sweep_transitions(p, sweep, freq_window,
                                      max_photons=max_photons,
                                      ground_only=True,
                                      weight_floor=weight_floor)
    if noise_sigma_mhz > 0 and rng is None:
        rng = np.random.default_rng(0)
    out = []
    for cat in cats:
        for t in cat.transitions:
            f = t.freq
            if noise_sigma_mhz > 0:
                f += rng.normal(0.0, noise_sigma_mhz * 1e-3)
            out.append(PeakObservation(
                sweep_value=cat.sweep_value, freq=float(f),
                amplitude=t.weight, fwhm_mhz=fwhm_mhz, n_photons=t.n_photons,
            ))
    return out


@dataclass
class GeffRow:
    delta_mhz: float
    g_eff_measured_mhz: float
    g_eff_formula_mhz: float

    @property
    def ratio(self) -> float:
        return self.g_eff_measured_mhz / self.g_eff_formula_mhz


def geff_vs_detuning(
    p: model.SystemParams,
    deltas_mhz: Sequence[float],
    sweep_halfspan_v: float = 0.6,
    sweep_points: int = 61,
    window_halfspan_ghz: float = 0.04,
) -> list[GeffRow]:
    """Resonator-TLS coupling vs qubit detuning: half the anti-crossing
    gap next to the analytic g_qr g_x / delta expectation."""
    if len(deltas_mhz) < 2:
        raise ValueError("need at least two detunings")
    f_res = p.resonator.f_res
    v_star = model.resonance_piezo(p.tls, f_res)
    rows = []
    for delta in deltas_mhz:
        pv = dataclasses.replace(p, f_q=f_res + delta * 1e-3)
        sweep = spectrum.SweepSpec("piezo_v", tuple(
            np.linspace(v_star - sweep_halfspan_v, v_star + sweep_halfspan_v, sweep_points)))
        window = (f_res - window_halfspan_ghz, f_res + window_halfspan_ghz)
        cats = spectrum.sweep_transitions(pv, sweep, window, max_photons=1)
        gap = spectrum.anticrossing_gap(cats, spectrum.BranchSelector(window, 1))
        rows.append(GeffRow(
            delta_mhz=float(delta),
            g_eff_measured_mhz=0.5 * gap.gap_mhz,
            g_eff_formula_mhz=effective_coupling(p.resonator.g_qr, p.tls.g_x, float(delta)),
        ))
    return rows


@dataclass
class GzDetectability:
    gz_true_mhz: float
    gz_fitted_mhz: float
    gz_sigma_mhz: float
    significant: bool              # |fit| > 2 sigma


def gz_detectability(
    p: model.SystemParams,
    gz_true_mhz: float,
    noise_sigma_mhz: float = 1.27,
    n_sweep: int = 9,
    sweep_halfspan_v: float = 0.5,
    rng_seed: int = 7,
) -> GzDetectability:
    """Inject synthetic peaks at a given longitudinal coupling, refit with
    g_z free, and test whether the fitted value is significant (2 sigma).

    The frequency noise models the finite two-photon linewidth that
    limits the detectable line shift g_z / 2.
    """
    f_q = model.qubit_frequency(p)
    v_star = model.resonance_piezo(p.tls, f_q)
    truth = dataclasses.replace(
        p, tls=dataclasses.replace(p.tls, g_z=gz_true_mhz))
    sweep_values = np.linspace(v_star - sweep_halfspan_v, v_star + sweep_halfspan_v, n_sweep)
    window = (f_q - 0.06, f_q + 0.06)
    rng = np.random.default_rng(rng_seed)
    obs = synthetic_observations(
        truth, sweep_values, window, max_photons=2,
        noise_sigma_mhz=noise_sigma_mhz, rng=rng, fwhm_mhz=3.0)

    problem = FitProblem(
        base_params=p,
        observations=tuple(obs),
        free_names=("g_x", "V0", "g_z"),
        bounds={"g_x": (10.0, 35.0),
                "V0": (p.tls.v0 - 2.0, p.tls.v0 + 2.0),
                "g_z": (-15.0, 15.0)},
        freq_window=window,
        max_photons=2,
    )
    seed = {"g_x": p.tls.g_x, "V0": p.tls.v0, "g_z": 0.0}
    result = fit(problem, seed, FitStrategy(nm_maxiter=200))
    gz_fit = result.best_values["g_z"]
    sigma = result.uncertainties["g_z"]
    return GzDetectability(
        gz_true_mhz=gz_true_mhz,
        gz_fitted_mhz=gz_fit,
        gz_sigma_mhz=sigma,
        significant=bool(abs(gz_fit) > 2.0 * sigma),
    )
