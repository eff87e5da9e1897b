import dataclasses
import math

import numpy as np
import pytest

from qtrsim import model, spectrum
from qtrsim.constants import GHZ_TO_ANGULAR
from qtrsim.operators import Operator


def duffing_only(f_q=7.32, e_c=0.228, n_levels=4):
    """Qubit alone; resonator and TLS pushed far away and decoupled."""
    return model.SystemParams(
        qubit=model.QubitParams(f_q_max=f_q, e_c=e_c, n_levels=n_levels),
        resonator=model.ResonatorParams(f_res=30.0, g_qr=0.0, n_levels=2),
        tls=model.TlsParams(delta0=40.0, gamma=0.0, g_x=0.0),
        f_q=f_q,
    )


class TestTransitionCatalog:
    def test_decoupled_duffing_lines(self):
        p = duffing_only()
        cat = spectrum.transition_catalog(
            model.full_hamiltonian(p), model.qubit_drive_operator(p),
            max_photons=2, ground_only=True, freq_window=(7.0, 7.6), dims=p.dims)
        one = cat.select(n_photons=1)
        two = cat.select(n_photons=2)
        assert len(one) == 1 and len(two) == 1
        assert one[0].freq == pytest.approx(7.32, abs=1e-12)
        assert two[0].freq == pytest.approx(7.32 - 0.114, abs=1e-9)
        assert one[0].to_label == "q1r0t0"
        assert two[0].to_label == "q2r0t0"

    def test_photon_reconstruction_identity(self, table1_small):
        h = model.full_hamiltonian(table1_small)
        freqs, _ = spectrum.eigensystem_ghz(h)
        cat = spectrum.transition_catalog(
            h, model.qubit_drive_operator(table1_small),
            max_photons=3, freq_window=(2.0, 9.0), dims=table1_small.dims)
        for t in cat.transitions:
            exact = freqs[t.to_idx] - freqs[t.from_idx]
            assert t.freq * t.n_photons == pytest.approx(exact, rel=1e-12)

    def test_resonant_doublet_and_central_two_photon(self, table1):
        # at qubit-TLS resonance: 1-photon doublet split by 2 g_x with the
        # 2-photon line centered between the doublet
        p = dataclasses.replace(table1, piezo_v=model.resonance_piezo(table1.tls, 7.32))
        cat = spectrum.transition_catalog(
            model.full_hamiltonian(p), model.qubit_drive_operator(p),
            max_photons=2, ground_only=True, freq_window=(7.27, 7.37), dims=p.dims)
        one = sorted(cat.select(n_photons=1), key=lambda t: t.weight, reverse=True)[:2]
        split = abs(one[0].freq - one[1].freq) * 1e3
        assert split == pytest.approx(2 * 21.7, rel=0.02)
        center = 0.5 * (one[0].freq + one[1].freq)
        two = sorted(cat.select(n_photons=2), key=lambda t: t.weight, reverse=True)[0]
        assert abs(two.freq - center) * 1e3 < 6.0

    def test_three_photon_star(self, table1):
        # strain value where the TLS sits at 6.88 GHz: three drive photons
        # reach the state with two resonator quanta plus the excited TLS
        p = dataclasses.replace(table1, piezo_v=model.resonance_piezo(table1.tls, 6.88))
        cat = spectrum.transition_catalog(
            model.full_hamiltonian(p), model.qubit_drive_operator(p),
            max_photons=3, ground_only=True, freq_window=(6.60, 6.80),
            weight_floor=1e-6, dims=p.dims)
        target = (2 * 6.625 + 6.88) / 3.0
        hits = [t for t in cat.select(n_photons=3)
                if t.to_label == "q0r2t1" and abs(t.freq - target) < 0.02]
        assert hits, "expected the 3-photon resonator+resonator+TLS line"

    def test_empty_window_is_empty_catalog(self, table1_small):
        cat = spectrum.transition_catalog(
            model.full_hamiltonian(table1_small),
            model.qubit_drive_operator(table1_small),
            freq_window=(0.001, 0.002), dims=table1_small.dims)
        assert cat.transitions == ()

    def test_max_photons_validation(self, table1_small):
        with pytest.raises(ValueError):
            spectrum.transition_catalog(
                model.full_hamiltonian(table1_small),
                model.qubit_drive_operator(table1_small), max_photons=0)


class TestSweep:
    def test_monotonicity_enforced(self):
        with pytest.raises(ValueError):
            spectrum.SweepSpec("piezo_v", (1.0, 3.0, 2.0))
        with pytest.raises(ValueError):
            spectrum.SweepSpec("bogus_axis", (1.0, 2.0))

    def test_far_detuned_tls_leaves_qubit_lines_flat(self, table1_small):
        # TLS stays 2 GHz below the qubit across the whole sweep
        p = dataclasses.replace(
            table1_small,
            tls=dataclasses.replace(table1_small.tls, delta0=5.0, gamma=10.0))
        sweep = spectrum.SweepSpec("piezo_v", tuple(np.linspace(0, 40, 9)))
        cats = spectrum.sweep_transitions(p, sweep, (7.25, 7.40), max_photons=1)
        line = [c.select(n_photons=1)[0].freq for c in cats]
        assert (max(line) - min(line)) * 1e3 < 0.2  # MHz

    def test_minimum_splitting_equals_2gx(self, table1):
        v_star = model.resonance_piezo(table1.tls, 7.32)
        sweep = spectrum.SweepSpec(
            "piezo_v", tuple(np.linspace(v_star - 1.0, v_star + 1.0, 41)))
        cats = spectrum.sweep_transitions(table1, sweep, (7.2, 7.45), max_photons=1)
        gap = spectrum.anticrossing_gap(
            cats, spectrum.BranchSelector((7.2, 7.45), 1))
        assert gap.gap_mhz == pytest.approx(2 * 21.7, rel=0.01)
        assert not gap.degenerate

    def test_resonator_branch_gap_matches_cross_resonance(self, table1):
        # qubit parked 500 MHz above the resonator; TLS swept through it
        p = model.with_levels(table1, 4, 4)
        p = dataclasses.replace(p, f_q=p.resonator.f_res + 0.5)
        v_star = model.resonance_piezo(p.tls, p.resonator.f_res)
        sweep = spectrum.SweepSpec(
            "piezo_v", tuple(np.linspace(v_star - 0.6, v_star + 0.6, 61)))
        window = (6.585, 6.665)
        cats = spectrum.sweep_transitions(p, sweep, window, max_photons=1)
        gap = spectrum.anticrossing_gap(cats, spectrum.BranchSelector(window, 1))
        g_eff = 34.0 * 21.7 / 500.0
        assert gap.gap_mhz / 2 == pytest.approx(g_eff, rel=0.10)

    def test_sweep_workers_deterministic(self, table1_small):
        sweep = spectrum.SweepSpec("piezo_v", tuple(np.linspace(30, 50, 5)))
        serial = spectrum.sweep_transitions(table1_small, sweep, (7.0, 7.6))
        parallel = spectrum.sweep_transitions(table1_small, sweep, (7.0, 7.6), workers=2)
        assert serial == parallel


class TestBranchTracking:
    def test_branches_continuous_through_crossing(self, table1_small):
        # ascending eigenvalue order swaps at the anti-crossing; the
        # overlap-matched branches must stay smooth: no jump exceeding
        # 5x the neighboring local slope
        v_star = model.resonance_piezo(table1_small.tls, 7.32)
        sweep = spectrum.SweepSpec(
            "piezo_v", tuple(np.linspace(v_star - 1.0, v_star + 1.0, 41)))
        branches = spectrum.track_eigenbranches(table1_small, sweep)
        floor = 1e-4  # GHz, numerical slope floor
        for k in range(branches.shape[1]):
            steps = np.abs(np.diff(branches[:, k]))
            for i in range(1, len(steps) - 1):
                local = max(steps[i - 1], steps[i + 1], floor)
                assert steps[i] < 5.0 * local

    def test_exact_crossing_unkinks_branches(self, table1_small):
        # with g_x = 0 the TLS line crosses the qubit line exactly;
        # ascending order kinks there (large second difference) while the
        # overlap-matched branches stay straight
        p = dataclasses.replace(
            table1_small, tls=dataclasses.replace(table1_small.tls, g_x=0.0))
        v_star = model.resonance_piezo(p.tls, 7.32)
        sweep = spectrum.SweepSpec(
            "piezo_v", tuple(np.linspace(v_star - 1.0, v_star + 0.9, 40)))
        raw = []
        for v in sweep.values:
            pv = spectrum.params_at(p, "piezo_v", v)
            freqs, _ = spectrum.eigensystem_ghz(model.full_hamiltonian(pv))
            raw.append(freqs)
        raw = np.array(raw)
        tracked = spectrum.track_eigenbranches(p, sweep)

        def worst_kink(curves):
            return np.max(np.abs(np.diff(curves, n=2, axis=0)))

        assert not np.allclose(raw, tracked)
        assert worst_kink(tracked) < 0.1 * worst_kink(raw)


def synthetic_two_level_catalogs(g_mhz, slope_ghz_per_v=0.2, points=41):
    """Exact 2x2 avoided crossing: diag(0, k(s-s0)) + off-diagonal g."""
    cats = []
    for s in np.linspace(-1.0, 1.0, points):
        delta = slope_ghz_per_v * s
        g = g_mhz * 1e-3
        lam = 0.5 * delta + np.array([-1, 1]) * math.hypot(0.5 * delta, g)
        base = 5.0  # offset of the doublet
        transitions = tuple(
            spectrum.Transition(0, k + 1, base + lam[k], 1, 1.0, "g", f"b{k}")
            for k in range(2)
        )
        cats.append(spectrum.TransitionCatalog(sweep_value=float(s),
                                               transitions=transitions))
    return cats


class TestGapExtraction:
    @pytest.mark.parametrize("g_mhz", [1.0, 10.0, 100.0])
    def test_analytic_two_level_gap(self, g_mhz):
        cats = synthetic_two_level_catalogs(g_mhz)
        gap = spectrum.anticrossing_gap(
            cats, spectrum.BranchSelector((4.0, 6.0), 1))
        assert gap.gap_mhz == pytest.approx(2 * g_mhz, rel=1e-6)
        assert gap.location == pytest.approx(0.0, abs=1e-9)

    def test_no_bracketing_raises(self):
        cats = synthetic_two_level_catalogs(10.0)
        half = cats[: len(cats) // 2 - 1]  # crossing outside the range
        with pytest.raises(spectrum.NoCrossingError):
            spectrum.anticrossing_gap(half, spectrum.BranchSelector((4.0, 6.0), 1))

    def test_zero_coupling_flagged_degenerate(self):
        cats = synthetic_two_level_catalogs(0.0)
        gap = spectrum.anticrossing_gap(cats, spectrum.BranchSelector((4.0, 6.0), 1))
        assert gap.degenerate
        assert gap.gap_mhz < 1e-3


class TestTwoPhotonShift:
    def test_zero_gz_zero_shift(self, table1_small):
        gz, shifts = spectrum.two_photon_shift_vs_gz(table1_small, [0.0])
        assert shifts[0] == pytest.approx(0.0, abs=1e-12)

    def test_slope_is_half(self, table1_small):
        gz, shifts = spectrum.two_photon_shift_vs_gz(
            table1_small, np.linspace(0.0, 20.0, 11))
        slope = np.polyfit(gz, shifts, 1)[0]
        assert slope == pytest.approx(0.5, rel=0.05)

    def test_detectability_threshold_value(self, table1_small):
        gz, shifts = spectrum.two_photon_shift_vs_gz(table1_small, [6.0])
        assert shifts[0] == pytest.approx(3.0, abs=0.5)


def test_catalog_rows_flatten(table1_small):
    sweep = spectrum.SweepSpec("piezo_v", (30.0, 40.0))
    cats = spectrum.sweep_transitions(table1_small, sweep, (7.0, 7.6))
    rows = spectrum.catalog_rows(cats)
    assert len(rows) == sum(len(c.transitions) for c in cats)
    assert rows[0][0] == 30.0
