import dataclasses
import math

import numpy as np
import pytest

from qtrsim import analytics, model, spectrum
from qtrsim.analytics import T1Convention
from qtrsim.constants import E_CHARGE, H_PLANCK, HBAR


class TestFluxDispersion:
    def test_zero_flux(self, table1):
        assert analytics.qubit_freq_vs_flux(table1.qubit, 0.0) == pytest.approx(7.32)

    def test_even_and_periodic(self, table1):
        q = table1.qubit
        for phi in (0.07, 0.21, 0.4):
            f = analytics.qubit_freq_vs_flux(q, phi)
            assert analytics.qubit_freq_vs_flux(q, -phi) == pytest.approx(f, abs=1e-12)
            assert analytics.qubit_freq_vs_flux(q, phi + 1.0) == pytest.approx(f, abs=1e-9)

    def test_symmetric_limit_flux_independent(self):
        q = model.QubitParams(f_q_max=7.32, e_c=0.228, d=1.0 - 1e-12)
        assert analytics.qubit_freq_vs_flux(q, 0.5) == pytest.approx(7.32, abs=1e-5)

    def test_transmon_violation_raises(self):
        q = model.QubitParams(f_q_max=7.32, e_c=0.228, d=1e-4)
        with pytest.raises(model.TransmonRegimeError):
            analytics.qubit_freq_vs_flux(q, 0.5)


class TestDispersiveShift:
    def test_table_values(self):
        # g_qr = 34 MHz, delta = 695 MHz
        assert analytics.dispersive_shift(34.0, 695.0) == pytest.approx(-1.6633, abs=1e-3)

    def test_zero_coupling(self):
        assert analytics.dispersive_shift(0.0, 500.0) == 0.0

    def test_zero_detuning_rejected(self):
        with pytest.raises(analytics.DispersiveLimitError):
            analytics.dispersive_shift(34.0, 0.0)

    def test_odd_in_delta(self):
        assert analytics.dispersive_shift(34.0, -695.0) == -analytics.dispersive_shift(34.0, 695.0)

    def test_eigensolver_cross_check(self, table1):
        # pull chi from the labeled dressed levels with the TLS decoupled;
        # agreement within 15% at delta/g ~ 20
        p = dataclasses.replace(
            table1, tls=dataclasses.replace(table1.tls, g_x=0.0, g_z=0.0))
        freqs, vecs = spectrum.eigensystem_ghz(model.full_hamiltonian(p))
        labels = spectrum.dominant_labels(vecs, p.dims)

        def level(lab):
            return freqs[labels.index(lab)]

        chi_sim = ((level("q1r1t0") - level("q1r0t0"))
                   - (level("q0r1t0") - level("q0r0t0"))) * 1e3
        chi_formula = analytics.dispersive_shift(34.0, (7.32 - 6.625) * 1e3)
        assert chi_sim == pytest.approx(chi_formula, rel=0.15)
        assert chi_sim < 0


class TestEffectiveCoupling:
    def test_largest_detuning_value(self):
        # 34 * 21.7 / 500, consistent with a coupling above ~1.5 MHz
        assert analytics.effective_coupling(34.0, 21.7, 500.0) == pytest.approx(1.4756, abs=1e-4)

    def test_zero_transverse_coupling(self):
        assert analytics.effective_coupling(34.0, 0.0, 500.0) == 0.0

    def test_odd_in_delta(self):
        plus = analytics.effective_coupling(34.0, 21.7, 400.0)
        minus = analytics.effective_coupling(34.0, 21.7, -400.0)
        assert plus == -minus

    def test_zero_detuning_rejected(self):
        with pytest.raises(analytics.DispersiveLimitError):
            analytics.effective_coupling(34.0, 21.7, 0.0)


class TestT1Estimate:
    def setup_method(self):
        self.rates = model.DecoherenceParams(
            gamma1_q=0.04, gamma2_q=0.02, gamma1_tls=10.0, gamma2_tls=10.0)

    def test_far_detuned_limit_is_intrinsic_t1(self):
        t1 = analytics.t1_estimate(22.0, self.rates, 1e9, T1Convention.CALIBRATED)
        assert t1 == pytest.approx(25.0, rel=1e-3)

    def test_zero_coupling_exact(self):
        for conv in T1Convention:
            t1 = analytics.t1_estimate(0.0, self.rates, 1500.0, conv)
            assert t1 == pytest.approx(25.0, rel=1e-12)

    def test_monotone_in_detuning_and_bounded(self):
        deltas = [200.0, 500.0, 1000.0, 2000.0, 5000.0]
        t1s = [analytics.t1_estimate(22.0, self.rates, d, T1Convention.CALIBRATED)
               for d in deltas]
        assert all(a <= b for a, b in zip(t1s, t1s[1:]))
        assert all(t <= 25.0 + 1e-9 for t in t1s)

    def test_convention_study_singles_out_calibrated(self):
        rows = analytics.t1_convention_study()
        by_conv = {r.convention: r for r in rows}
        assert by_conv[T1Convention.CALIBRATED].reproduces_published_range
        for conv in (T1Convention.VERBATIM_ORDINARY, T1Convention.VERBATIM_ANGULAR,
                     T1Convention.COUPLING_SQUARED, T1Convention.GOLDEN_RULE):
            assert not by_conv[conv].reproduces_published_range

    def test_calibrated_range_values(self):
        row = {r.convention: r for r in analytics.t1_convention_study()}[
            T1Convention.CALIBRATED]
        assert row.t1_us[1000.0] == pytest.approx(1.06, abs=0.05)
        assert row.t1_us[2000.0] == pytest.approx(3.77, abs=0.10)


class TestDipoleExtraction:
    def test_against_direct_constant_arithmetic(self):
        # independent oracle: evaluate p = h g t sqrt(2 C / (hbar w)) from
        # the CODATA constants right here
        g_hz = 21.7e6
        omega = 2 * math.pi * 7.32e9
        c = 85e-15
        t = 2e-9
        v_rms = math.sqrt(HBAR * omega / (2 * c))
        expected = H_PLANCK * g_hz * t / v_rms / (E_CHARGE * 1e-10)
        got = analytics.dipole_from_coupling(21.7, 7.32, 85.0, 2.0)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(0.33603, abs=2e-4)

    def test_linear_in_barrier_thickness(self):
        p1 = analytics.dipole_from_coupling(21.7, 7.32, 85.0, 2.0)
        p2 = analytics.dipole_from_coupling(21.7, 7.32, 85.0, 4.0)
        assert p2 == pytest.approx(2 * p1, rel=1e-12)

    def test_round_trip_inverse_pair(self):
        g = 21.7
        p_bar = analytics.dipole_from_coupling(g, 7.32, 85.0, 2.0)
        back = analytics.coupling_from_dipole(p_bar, 7.32, 85.0, 2.0)
        assert back == pytest.approx(g, rel=1e-12)


class TestChargingEnergy:
    def test_85_ff_gives_228_mhz_within_1_percent(self):
        e_c = analytics.charging_energy_from_capacitance(85.0)
        assert e_c * 1e3 == pytest.approx(228.0, rel=0.01)

    def test_doubling_capacitance_halves_energy(self):
        assert analytics.charging_energy_from_capacitance(170.0) == pytest.approx(
            analytics.charging_energy_from_capacitance(85.0) / 2, rel=1e-12)

    def test_exact_inverse_pair(self):
        for c in (40.0, 85.0, 213.0):
            e = analytics.charging_energy_from_capacitance(c)
            assert analytics.capacitance_from_charging_energy(e) == pytest.approx(c, rel=1e-12)


class TestReadoutFailureLocator:
    def test_table_hyperbola_branches(self, table1):
        v = analytics.readout_failure_voltages(table1)
        assert len(v) == 2
        assert abs(v[1] - table1.tls.v0) == pytest.approx(14.7728, abs=1e-3)
        assert v[0] == pytest.approx(2 * table1.tls.v0 - v[1], abs=1e-9)

    def test_tangency_single_solution(self, table1):
        p = dataclasses.replace(
            table1, tls=dataclasses.replace(table1.tls, delta0=table1.resonator.f_res))
        assert analytics.readout_failure_voltages(p) == (table1.tls.v0,)

    def test_no_solution_below_floor(self, table1):
        p = dataclasses.replace(
            table1, tls=dataclasses.replace(table1.tls, delta0=6.9))
        assert analytics.readout_failure_voltages(p) == ()


class TestDerivedQuantities:
    def test_bundle_at_table_point(self, table1):
        d = analytics.derived_quantities(table1)
        assert d.f_q_ghz == pytest.approx(7.32)
        assert d.chi_mhz == pytest.approx(-1.6633, abs=1e-3)
        assert d.p_bar_ea == pytest.approx(0.336, abs=1e-3)
        assert len(d.readout_failure_v) == 2
        assert not d.warnings

    def test_regime_warnings_flagged(self, table1):
        # park the qubit 100 MHz above the resonator: delta / g ~ 3
        p = dataclasses.replace(table1, f_q=table1.resonator.f_res + 0.1)
        d = analytics.derived_quantities(p)
        codes = {w.code for w in d.warnings}
        assert "dispersive" in codes and "perturbative" in codes
