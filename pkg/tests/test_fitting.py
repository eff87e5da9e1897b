import dataclasses
import math

import numpy as np
import pytest

from qtrsim import dynamics, fitting, model, spectrum


def lorentzian(freqs, center, fwhm, height=1.0):
    return height / (1.0 + (2.0 * (freqs - center) / fwhm) ** 2)


def synthetic_grid(columns, freqs, sweep_values=None):
    """Grid whose row i is columns[i] (list of (center, fwhm, height))."""
    values = np.zeros((len(columns), len(freqs)))
    for i, peaks in enumerate(columns):
        for center, fwhm, height in peaks:
            values[i] += lorentzian(freqs, center, fwhm, height)
    if sweep_values is None:
        sweep_values = np.arange(len(columns), dtype=float)
    return dynamics.SpectroscopyGrid(
        sweep_values=np.asarray(sweep_values, dtype=float),
        freq_values=np.asarray(freqs, dtype=float),
        values=values,
        metadata={},
    )


class TestExtractPeaks:
    def test_single_lorentzian_center_and_width(self):
        freqs = np.linspace(7.0, 7.2, 201)          # 1 MHz bins
        df = freqs[1] - freqs[0]
        rng = np.random.default_rng(11)
        for _ in range(6):
            center = rng.uniform(7.05, 7.15)
            fwhm = 5.0 * df                          # 5 bins wide
            grid = synthetic_grid([[(center, fwhm, 1.0)]], freqs)
            peaks = fitting.extract_peaks(grid, prominence=0.2)
            assert len(peaks) == 1
            assert abs(peaks[0].freq - center) < 0.05 * df
            assert peaks[0].fwhm_mhz == pytest.approx(fwhm * 1e3, rel=0.05)

    def test_flat_grid_no_peaks(self):
        freqs = np.linspace(7.0, 7.2, 101)
        grid = dynamics.SpectroscopyGrid(
            sweep_values=np.array([0.0]), freq_values=freqs,
            values=np.full((1, 101), 0.3), metadata={})
        assert fitting.extract_peaks(grid, prominence=0.1) == []

    def test_two_separated_lorentzians_both_found(self):
        freqs = np.linspace(7.0, 7.2, 201)
        fwhm = 0.008
        c1, c2 = 7.08, 7.08 + 1.7 * fwhm
        grid = synthetic_grid([[(c1, fwhm, 1.0), (c2, fwhm, 0.9)]], freqs)
        peaks = fitting.extract_peaks(grid, prominence=0.05)
        assert len(peaks) == 2
        got = sorted(p.freq for p in peaks)
        assert got[0] == pytest.approx(c1, abs=0.002)
        assert got[1] == pytest.approx(c2, abs=0.002)

    def test_amplitude_rescaling_equivariance(self):
        freqs = np.linspace(7.0, 7.2, 201)
        grid = synthetic_grid([[(7.11, 0.01, 1.0)]], freqs)
        scaled = dynamics.SpectroscopyGrid(
            sweep_values=grid.sweep_values, freq_values=grid.freq_values,
            values=grid.values * 137.0, metadata={})
        p1 = fitting.extract_peaks(grid, prominence=0.1)
        p2 = fitting.extract_peaks(scaled, prominence=0.1)
        assert [p.freq for p in p1] == [p.freq for p in p2]

    def test_all_nan_column_skipped(self, caplog):
        freqs = np.linspace(7.0, 7.2, 101)
        grid = synthetic_grid([[(7.1, 0.01, 1.0)], [(7.1, 0.01, 1.0)]], freqs)
        values = grid.values.copy()
        values[1, :] = np.nan
        grid = dataclasses.replace(grid, values=values)
        with caplog.at_level("WARNING"):
            peaks = fitting.extract_peaks(grid, prominence=0.1)
        assert len(peaks) == 1
        assert "NaN" in caplog.text

    def test_nan_holes_do_not_seed_peaks(self):
        freqs = np.linspace(7.0, 7.2, 201)
        grid = synthetic_grid([[(7.05, 0.01, 1.0)]], freqs)
        values = grid.values.copy()
        values[0, 150:160] = np.nan   # hole far from the peak
        grid = dataclasses.replace(grid, values=values)
        peaks = fitting.extract_peaks(grid, prominence=0.1)
        assert len(peaks) == 1
        assert peaks[0].freq == pytest.approx(7.05, abs=0.002)

    def test_smoothing_suppresses_single_bin_noise(self):
        rng = np.random.default_rng(0)
        freqs = np.linspace(7.0, 7.2, 201)
        grid = synthetic_grid([[(7.1, 0.012, 1.0)]], freqs)
        noisy = grid.values + rng.normal(0, 0.02, size=grid.values.shape)
        grid = dataclasses.replace(grid, values=noisy)
        peaks = fitting.extract_peaks(grid, prominence=0.3, smooth_width=5)
        assert len(peaks) == 1
        assert peaks[0].freq == pytest.approx(7.1, abs=0.003)


def small_params():
    return model.SystemParams(
        qubit=model.QubitParams(f_q_max=7.32, e_c=0.228, n_levels=4),
        resonator=model.ResonatorParams(f_res=6.625, g_qr=34.0, n_levels=3),
        tls=model.TlsParams(delta0=5.838, gamma=212.0, v0=40.0, g_x=21.7),
        piezo_v=40.0,
        f_q=7.32,
    )


class TestModelResiduals:
    def make_problem(self, p, obs):
        return fitting.FitProblem(
            base_params=p, observations=tuple(obs),
            free_names=("g_x",), bounds={"g_x": (5.0, 40.0)},
            freq_window=(7.0, 7.6), max_photons=2)

    def test_zero_at_generating_params(self):
        p = small_params()
        v_star = model.resonance_piezo(p.tls, 7.32)
        obs = fitting.synthetic_observations(
            p, np.linspace(v_star - 1, v_star + 1, 5), (7.2, 7.45), max_photons=2)
        problem = self.make_problem(p, obs)
        r = fitting.model_residuals(problem, [21.7])
        assert np.max(np.abs(r)) < 1e-12

    def test_known_offset_recovered(self):
        p = small_params()
        v_star = model.resonance_piezo(p.tls, 7.32)
        obs = fitting.synthetic_observations(p, [v_star - 1.0], (7.2, 7.45),
                                             max_photons=1)
        shifted = [dataclasses.replace(o, freq=o.freq + 0.002) for o in obs]
        problem = self.make_problem(p, shifted)
        r = fitting.model_residuals(problem, [21.7])
        assert np.allclose(r, 0.002, atol=1e-9)

    def test_empty_catalog_gives_sentinel(self):
        p = small_params()
        obs = [fitting.PeakObservation(sweep_value=40.0, freq=7.3, n_photons=1)]
        problem = fitting.FitProblem(
            base_params=p, observations=tuple(obs), free_names=("g_x",),
            bounds={"g_x": (5.0, 40.0)},
            freq_window=(2.0, 2.1),        # no transitions live here
            max_photons=1)
        r, sentinel = fitting.model_residuals_detailed(problem, [21.7])
        assert sentinel.all()
        assert r[0] == fitting.SENTINEL_RESIDUAL


class TestFit:
    def test_single_parameter_exact_recovery(self):
        # noiseless resonator line; fit f_res alone
        p = small_params()
        obs = fitting.synthetic_observations(
            p, [30.0, 50.0], (6.5, 6.75), max_photons=1, weight_floor=1e-4)
        assert obs, "resonator line must be visible through qubit hybridization"
        problem = fitting.FitProblem(
            base_params=p, observations=tuple(obs),
            free_names=("f_res",), bounds={"f_res": (6.4, 6.9)},
            freq_window=(6.5, 6.75), max_photons=1, weight_floor=1e-4)
        result = fitting.fit(problem, {"f_res": 6.7})
        assert result.best_values["f_res"] == pytest.approx(6.625, abs=2e-4)
        assert result.converged

    def test_loss_trace_non_increasing(self):
        p = small_params()
        v_star = model.resonance_piezo(p.tls, 7.32)
        obs = fitting.synthetic_observations(
            p, np.linspace(v_star - 1, v_star + 1, 5), (7.2, 7.45), max_photons=1)
        problem = fitting.FitProblem(
            base_params=p, observations=tuple(obs),
            free_names=("g_x", "V0"),
            bounds={"g_x": (10.0, 35.0), "V0": (37.0, 43.0)},
            freq_window=(7.0, 7.6), max_photons=1)
        result = fitting.fit(problem, {"g_x": 26.0, "V0": 41.0})
        trace = np.array(result.trace)
        assert np.all(np.diff(trace) <= 1e-12)

    def test_rms_reproduces_loss(self):
        p = small_params()
        v_star = model.resonance_piezo(p.tls, 7.32)
        obs = fitting.synthetic_observations(p, [v_star], (7.2, 7.45), max_photons=1)
        obs = [dataclasses.replace(o, freq=o.freq + 0.001) for o in obs]
        problem = fitting.FitProblem(
            base_params=p, observations=tuple(obs), free_names=("g_x",),
            bounds={"g_x": (15.0, 30.0)}, freq_window=(7.0, 7.6), max_photons=1)
        result = fitting.fit(problem, {"g_x": 21.7})
        w = problem.weight_vector()
        loss_from_rms = (result.residual_rms_mhz * 1e-3) ** 2 * float(np.sum(w))
        assert loss_from_rms == pytest.approx(result.loss, rel=1e-9)

    def test_seed_outside_bounds_rejected(self):
        p = small_params()
        obs = [fitting.PeakObservation(sweep_value=40.0, freq=7.3)]
        problem = fitting.FitProblem(
            base_params=p, observations=tuple(obs), free_names=("g_x",),
            bounds={"g_x": (15.0, 30.0)}, freq_window=(7.0, 7.6))
        with pytest.raises(ValueError):
            fitting.fit(problem, {"g_x": 50.0})

    def test_multistart_deterministic(self):
        p = small_params()
        v_star = model.resonance_piezo(p.tls, 7.32)
        obs = fitting.synthetic_observations(p, [v_star - 0.5, v_star + 0.5],
                                             (7.2, 7.45), max_photons=1)
        problem = fitting.FitProblem(
            base_params=p, observations=tuple(obs), free_names=("g_x",),
            bounds={"g_x": (15.0, 30.0)}, freq_window=(7.0, 7.6), max_photons=1)
        strategy = fitting.FitStrategy(multistart=2, rng_seed=123, nm_maxiter=60)
        r1 = fitting.fit(problem, {"g_x": 18.0}, strategy)
        r2 = fitting.fit(problem, {"g_x": 18.0}, strategy)
        assert r1.best_values == r2.best_values
        assert r1.n_starts == 3


class TestGeffVsDetuning:
    def test_measured_tracks_formula(self, table1):
        p = model.with_levels(table1, 3, 3)
        rows = fitting.geff_vs_detuning(p, [300.0, 400.0, 500.0])
        for row in rows:
            assert 0.9 <= row.ratio <= 1.1
        assert rows[-1].g_eff_measured_mhz >= 1.4

    def test_inverse_detuning_law(self, table1):
        p = model.with_levels(table1, 3, 3)
        rows = fitting.geff_vs_detuning(p, [250.0, 500.0])
        assert rows[1].g_eff_measured_mhz == pytest.approx(
            rows[0].g_eff_measured_mhz / 2, rel=0.10)

    def test_needs_two_detunings(self, table1):
        with pytest.raises(ValueError):
            fitting.geff_vs_detuning(table1, [300.0])


class TestGzDetectability:
    def test_threshold_reproduced(self):
        p = model.with_levels(small_params(), 3, 2)
        strong = fitting.gz_detectability(p, 6.0)
        weak = fitting.gz_detectability(p, 1.0)
        assert strong.significant
        assert not weak.significant
        assert strong.gz_fitted_mhz == pytest.approx(6.0, abs=3 * strong.gz_sigma_mhz)
