"""Closed-form characterization quantities: flux dispersion, dispersive
shift, qubit-mediated resonator-TLS coupling, TLS-limited T1, dipole
moment extraction, charging energy, readout-failure location.

These are the fast oracles the eigensolver and dynamics results are
validated against. Regime-validity warnings are returned as structured
metadata (`RegimeWarning` entries collected by `derived_quantities`),
not emitted as log noise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from . import model
from .constants import E_CHARGE, H_PLANCK, HBAR


class DispersiveLimitError(ValueError):
    """delta = 0: the dispersive / perturbative approximation is invalid."""


@dataclass(frozen=True)
class RegimeWarning:
    code: str
    message: str
    ratio: float


def qubit_freq_vs_flux(q: model.QubitParams, phi: float) -> float:
    """Transmon frequency (GHz) at flux `phi` in units of Phi_0.

    Even and Phi_0-periodic in phi; the junction asymmetry d sets a
    strictly positive floor at half flux. Raises TransmonRegimeError
    when E_J(phi) <= E_C.
    """
    return model.qubit_frequency_at_flux(q, phi)


def dispersive_shift(g_qr_mhz: float, delta_mhz: float) -> float:
    """chi = -g_qr^2 / delta in MHz, the qubit-state-dependent resonator pull.

    Valid for |delta| >> g_qr; `regime_ratio` below ~5 means the number
    should not be trusted.
    """
    if delta_mhz == 0.0:
        raise DispersiveLimitError("delta = 0: dispersive approximation invalid")
    return -(g_qr_mhz**2) / delta_mhz


def effective_coupling(g_qr_mhz: float, g_x_mhz: float, delta_mhz: float) -> float:
    """Qubit-mediated resonator-TLS coupling g_eff = g_qr g_x / delta (MHz).

    `delta` is the common qubit detuning from resonator and TLS at their
    mutual resonance; requires |delta| >> g_qr, g_x.
    """
    if delta_mhz == 0.0:
        raise DispersiveLimitError("delta = 0: perturbative coupling invalid")
    return g_qr_mhz * g_x_mhz / delta_mhz


def regime_ratio(delta_mhz: float, *couplings_mhz: float) -> float:
    """|delta| over the largest coupling involved (infinite when all zero)."""
    top = max((abs(g) for g in couplings_mhz), default=0.0)
    return math.inf if top == 0.0 else abs(delta_mhz) / top


class T1Convention(enum.Enum):
    """Unit conventions for the TLS-limited qubit T1 estimate.

    The published estimate reads T1^-1 = 4 pi g_x Gamma / (Gamma^2 +
    delta^2) + Gamma_1q with Gamma the summed qubit and TLS decoherence
    rates. Taken verbatim the first term is dimensionless (linear in
    g_x), so some unit convention is implied; the options below span the
    defensible readings. For the quoted inputs (g_x = 22 MHz,
    Gamma_1,TLS = Gamma_2,TLS = 1/100 ns, delta = 1-2 GHz) they give:

    * VERBATIM_ORDINARY   - g, delta in Hz, Gamma in 1/s: TLS term is
      negligible, T1 ~= 25 us at both detunings.
    * VERBATIM_ANGULAR    - g, delta in rad/s: likewise negligible.
    * COUPLING_SQUARED    - g_x squared (dimensionally consistent),
      ordinary-frequency g and delta: T1 = 7.7 -> 15.9 us.
    * GOLDEN_RULE         - Lorentzian golden rule 2 g^2 Gamma /
      (Gamma^2 + delta^2), all angular: T1 = 17.9 -> 23.1 us.
    * CALIBRATED          - 4 pi^3 g^2 Gamma / (Gamma^2 + delta^2) with
      ordinary-frequency g and delta; the only candidate that reproduces
      the published 1.0 - 3.7 us range (gives 1.06 -> 3.77 us).

    No option is defaulted; callers choose explicitly.
    """

    VERBATIM_ORDINARY = "verbatim-ordinary"
    VERBATIM_ANGULAR = "verbatim-angular"
    COUPLING_SQUARED = "coupling-squared"
    GOLDEN_RULE = "golden-rule"
    CALIBRATED = "calibrated"


def summed_decoherence_rate(rates: model.DecoherenceParams) -> float:
    """Gamma = Gamma_1,TLS/2 + Gamma_2,TLS + Gamma_1,q/2 + Gamma_2,q in 1/us."""
    return (0.5 * rates.gamma1_tls + rates.gamma2_tls
            + 0.5 * rates.gamma1_q + rates.gamma2_q)


def t1_estimate(g_x_mhz: float, rates: model.DecoherenceParams,
                delta_mhz: float, convention: T1Convention) -> float:
    """TLS-limited qubit T1 in us under an explicit unit convention.

    Monotonically increasing in |delta| and bounded by 1/Gamma_1,q. See
    :class:`T1Convention` for what each convention computes.
    """
    gamma_s = summed_decoherence_rate(rates) * 1e6       # 1/s
    gamma1q_s = rates.gamma1_q * 1e6                     # 1/s
    g_hz = g_x_mhz * 1e6
    delta_hz = abs(delta_mhz) * 1e6
    two_pi = 2.0 * math.pi

    if convention is T1Convention.VERBATIM_ORDINARY:
        term = 4.0 * math.pi * g_hz * gamma_s / (gamma_s**2 + delta_hz**2)
    elif convention is T1Convention.VERBATIM_ANGULAR:
        term = (4.0 * math.pi * (two_pi * g_hz) * gamma_s
                / (gamma_s**2 + (two_pi * delta_hz) ** 2))
    elif convention is T1Convention.COUPLING_SQUARED:
        term = 4.0 * math.pi * g_hz**2 * gamma_s / (gamma_s**2 + delta_hz**2)
    elif convention is T1Convention.GOLDEN_RULE:
        term = (2.0 * (two_pi * g_hz) ** 2 * gamma_s
                / (gamma_s**2 + (two_pi * delta_hz) ** 2))
    elif convention is T1Convention.CALIBRATED:
        term = 4.0 * math.pi**3 * g_hz**2 * gamma_s / (gamma_s**2 + delta_hz**2)
    else:  # pragma: no cover
        raise ValueError(f"unknown convention {convention}")

    total = term + gamma1q_s
    if total == 0.0:
        return math.inf
    return 1e6 / total


@dataclass(frozen=True)
class T1StudyRow:
    convention: T1Convention
    t1_us: dict[float, float]          # delta_mhz -> T1
    reproduces_published_range: bool


def t1_convention_study(
    g_x_mhz: float = 22.0,
    rates: model.DecoherenceParams | None = None,
    deltas_mhz: tuple[float, float] = (1000.0, 2000.0),
    published_range_us: tuple[float, float] = (1.0, 3.7),
    tolerance: float = 0.10,
) -> list[T1StudyRow]:
    """Evaluate every T1 convention against the published 1.0 - 3.7 us range.

    Default inputs are the quoted ones: g_x = 22 MHz, TLS rates 1/100 ns,
    intrinsic qubit T1 = 25 us.
    """
    if rates is None:
        rates = model.DecoherenceParams(gamma1_q=0.04, gamma2_q=0.02,
                                        gamma1_tls=10.0, gamma2_tls=10.0)
    rows = []
    for conv in T1Convention:
        t1s = {d: t1_estimate(g_x_mhz, rates, d, conv) for d in deltas_mhz}
        lo, hi = published_range_us
        ok = (abs(t1s[deltas_mhz[0]] - lo) <= tolerance * lo
              and abs(t1s[deltas_mhz[1]] - hi) <= tolerance * hi)
        rows.append(T1StudyRow(convention=conv, t1_us=t1s,
                               reproduces_published_range=ok))
    return rows


# ---------------------------------------------------------------------------
# dipole moment and charging energy

def junction_voltage_rms(f_q_ghz: float, c_tot_ff: float) -> float:
    """Zero-point voltage sqrt(hbar w_q / 2 C_tot) in volts."""
    if f_q_ghz <= 0 or c_tot_ff <= 0:
        raise ValueError("f_q and C_tot must be positive")
    omega = 2.0 * math.pi * f_q_ghz * 1e9
    return math.sqrt(HBAR * omega / (2.0 * c_tot_ff * 1e-15))


def junction_field(f_q_ghz: float, c_tot_ff: float, t_nm: float) -> float:
    """Zero-point electric field V_rms / t in V/m inside the barrier."""
    if t_nm <= 0:
        raise ValueError("barrier thickness must be positive")
    return junction_voltage_rms(f_q_ghz, c_tot_ff) / (t_nm * 1e-9)


def dipole_from_coupling(g_x_mhz: float, f_q_ghz: float, c_tot_ff: float,
                         t_nm: float) -> float:
    """Effective TLS dipole moment in e*Angstrom from h g_x = p_bar |F|."""
    if g_x_mhz <= 0:
        raise ValueError("g_x must be positive")
    field = junction_field(f_q_ghz, c_tot_ff, t_nm)
    p_si = H_PLANCK * g_x_mhz * 1e6 / field          # C m
    return p_si / (E_CHARGE * 1e-10)


def coupling_from_dipole(p_bar_ea: float, f_q_ghz: float, c_tot_ff: float,
                         t_nm: float) -> float:
    """Inverse of :func:`dipole_from_coupling`; returns g_x in MHz."""
    if p_bar_ea <= 0:
        raise ValueError("dipole moment must be positive")
    field = junction_field(f_q_ghz, c_tot_ff, t_nm)
    g_hz = p_bar_ea * (E_CHARGE * 1e-10) * field / H_PLANCK
    return g_hz / 1e6


def charging_energy_from_capacitance(c_tot_ff: float) -> float:
    """E_c = e^2 / (2 C_tot h) in GHz."""
    if c_tot_ff <= 0:
        raise ValueError("C_tot must be positive")
    return E_CHARGE**2 / (2.0 * c_tot_ff * 1e-15 * H_PLANCK) / 1e9


def capacitance_from_charging_energy(e_c_ghz: float) -> float:
    """Exact inverse pair of :func:`charging_energy_from_capacitance` (fF)."""
    return model.capacitance_for_charging_energy(e_c_ghz)


def readout_failure_voltages(p: model.SystemParams) -> tuple[float, ...]:
    """Piezo voltages where the TLS crosses the resonator, V0 +- eps/gamma.

    Empty when f_res < delta0 (the hyperbola never reaches the
    resonator), a single tangency point when they are equal.
    """
    tls = p.tls
    f_res = p.resonator.f_res
    if f_res < tls.delta0:
        return ()
    if tls.gamma == 0.0:
        return ()
    eps = math.sqrt(f_res**2 - tls.delta0**2)        # GHz
    dv = eps / (tls.gamma * 1e-3)
    if dv == 0.0:
        return (tls.v0,)
    return (tls.v0 - dv, tls.v0 + dv)


@dataclass
class DerivedQuantities:
    """Characterization bundle for one operating point."""

    f_q_ghz: float
    f_res_ghz: float
    f_tls_ghz: float
    delta_qr_mhz: float                  # f_q - f_res
    delta_qt_mhz: float                  # f_q - f_TLS
    chi_mhz: float
    g_eff_mhz: float
    v_rms_v: float
    field_v_per_m: float
    p_bar_ea: float
    c_tot_ff: float
    e_c_ghz: float
    readout_failure_v: tuple[float, ...]
    t1_study: list[T1StudyRow]
    warnings: list[RegimeWarning]


def derived_quantities(p: model.SystemParams) -> DerivedQuantities:
    """All closed-form quantities for a parameter set at its operating point."""
    f_q = model.qubit_frequency(p)
    f_res = p.resonator.f_res
    f_tls = model.tls_frequency(p.tls, p.piezo_v)
    delta_qr = (f_q - f_res) * 1e3
    delta_qt = (f_q - f_tls) * 1e3

    warns: list[RegimeWarning] = []
    ratio_chi = regime_ratio(delta_qr, p.resonator.g_qr)
    if ratio_chi < 5.0:
        warns.append(RegimeWarning(
            "dispersive", f"|delta_qr| / g_qr = {ratio_chi:.2f} < 5: "
            "dispersive shift unreliable", ratio_chi))
    ratio_geff = regime_ratio(delta_qr, p.resonator.g_qr, p.tls.g_x)
    if ratio_geff < 5.0:
        warns.append(RegimeWarning(
            "perturbative", f"|delta| / max(g_qr, g_x) = {ratio_geff:.2f} < 5: "
            "effective coupling unreliable", ratio_geff))

    chi = dispersive_shift(p.resonator.g_qr, delta_qr) if delta_qr != 0 else math.nan
    g_eff = (effective_coupling(p.resonator.g_qr, p.tls.g_x, delta_qr)
             if delta_qr != 0 else math.nan)

    c_tot = p.qubit.c_tot if p.qubit.c_tot is not None else \
        capacitance_from_charging_energy(p.qubit.e_c)
    return DerivedQuantities(
        f_q_ghz=f_q,
        f_res_ghz=f_res,
        f_tls_ghz=f_tls,
        delta_qr_mhz=delta_qr,
        delta_qt_mhz=delta_qt,
        chi_mhz=chi,
        g_eff_mhz=g_eff,
        v_rms_v=junction_voltage_rms(f_q, c_tot),
        field_v_per_m=junction_field(f_q, c_tot, p.tls.barrier_t),
        p_bar_ea=dipole_from_coupling(p.tls.g_x, f_q, c_tot, p.tls.barrier_t)
        if p.tls.g_x > 0 else math.nan,
        c_tot_ff=c_tot,
        e_c_ghz=p.qubit.e_c,
        readout_failure_v=readout_failure_voltages(p),
        t1_study=t1_convention_study(g_x_mhz=p.tls.g_x or 22.0,
                                     rates=p.decoherence),
        warnings=warns,
    )
