"""System parameters and Hamiltonian assembly for the coupled
transmon / readout-resonator / strain-tuned-TLS system.

Unit conventions
----------------
Public fields use GHz for frequencies, MHz for couplings, volts for the
piezo axis, 1/us for decoherence rates. Hamiltonian builders return
operators in angular frequency (rad/us) so the evolution engine never
touches h or hbar; the conversion happens exactly once at this boundary.

The qubit is a Duffing oscillator with anharmonicity alpha_q = -E_c:
``H_Q = (w_q - alpha/2) n + (alpha/2) n^2`` so that E1 - E0 = f_q and
E2 - E1 = f_q + alpha_q. The resonator is harmonic, the TLS a two-level
system whose frequency follows the strain hyperbola
``f_TLS(V) = sqrt(delta0^2 + (gamma (V - V0))^2)``.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .constants import E_CHARGE, H_PLANCK, ghz_to_angular, mhz_to_angular
from .operators import (
    Operator,
    embed,
    identity,
    ladder_destroy,
    number_operator,
    tensor,
)


class ParamError(ValueError):
    """Invalid physical parameter value or combination."""


class ParamFileError(ValueError):
    """Malformed parameter file (bad syntax or unknown keys)."""


class TransmonRegimeError(ValueError):
    """Flux point where E_J(phi) <= E_C, outside the transmon approximation."""


@dataclass(frozen=True)
class QubitParams:
    """Tunable transmon described as a Duffing oscillator.

    `e_c` is the charging energy over h in GHz; the anharmonicity is
    alpha_q = -e_c. `c_tot`, when supplied, must satisfy
    C_tot * (E_c h) = e^2 / 2 within 0.1%. `i_c` (uA) and `a_jj` (nm^2)
    are metadata carried for bookkeeping only.
    """

    f_q_max: float
    e_c: float
    d: float = 0.0
    c_tot: float | None = None
    i_c: float | None = None
    a_jj: float | None = None
    n_levels: int = 6

    def __post_init__(self):
        if self.f_q_max <= 0:
            raise ParamError(f"f_q_max must be positive, got {self.f_q_max}")
        if self.e_c <= 0:
            raise ParamError(f"E_c must be positive, got {self.e_c}")
        if not 0.0 <= self.d < 1.0:
            raise ParamError(f"junction asymmetry d must lie in [0, 1), got {self.d}")
        if self.n_levels < 2:
            raise ParamError(f"qubit needs at least 2 levels, got {self.n_levels}")
        if self.c_tot is not None:
            expected = capacitance_for_charging_energy(self.e_c)
            if abs(self.c_tot - expected) > 1e-3 * expected:
                raise ParamError(
                    f"C_tot = {self.c_tot} fF inconsistent with E_c = {self.e_c} GHz "
                    f"(e^2/2E_c = {expected:.4g} fF)"
                )

    @property
    def alpha_q(self) -> float:
        """Anharmonicity in GHz (negative)."""
        return -self.e_c


@dataclass(frozen=True)
class ResonatorParams:
    f_res: float          # GHz
    g_qr: float           # MHz, qubit-resonator coupling
    n_levels: int = 6

    def __post_init__(self):
        if self.f_res <= 0:
            raise ParamError(f"f_res must be positive, got {self.f_res}")
        if self.g_qr < 0:
            raise ParamError(f"g_qr must be >= 0, got {self.g_qr}")
        if self.n_levels < 2:
            raise ParamError(f"resonator needs at least 2 levels, got {self.n_levels}")


@dataclass(frozen=True)
class TlsParams:
    """Two-level defect with strain-tunable asymmetry energy.

    `gamma` is the strain coupling in MHz per piezo volt, `v0` the piezo
    voltage of the symmetry point. `p_bar` (e Angstrom) is a derived
    dipole value carried as metadata; `barrier_t` is the tunnel-barrier
    thickness in nm used for dipole extraction.
    """

    delta0: float         # GHz
    gamma: float          # MHz / V
    v0: float = 0.0       # V
    g_x: float = 0.0      # MHz
    g_z: float = 0.0      # MHz
    p_bar: float | None = None
    barrier_t: float = 2.0

    def __post_init__(self):
        if self.delta0 <= 0:
            raise ParamError(f"delta0 must be positive, got {self.delta0}")
        if self.gamma < 0:
            raise ParamError(f"gamma must be >= 0, got {self.gamma}")
        if self.barrier_t <= 0:
            raise ParamError(f"barrier_t must be positive, got {self.barrier_t}")


@dataclass(frozen=True)
class DecoherenceParams:
    """Relaxation (Gamma_1) and total dephasing (Gamma_2) rates in 1/us."""

    gamma1_q: float = 0.0
    gamma2_q: float = 0.0
    gamma1_tls: float = 0.0
    gamma2_tls: float = 0.0
    kappa_res: float = 0.0

    def __post_init__(self):
        for name in ("gamma1_q", "gamma2_q", "gamma1_tls", "gamma2_tls", "kappa_res"):
            if getattr(self, name) < 0:
                raise ParamError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class SystemParams:
    """Full parameter set of the composite system plus the operating point.

    `flux` is the qubit flux bias in units of Phi_0 and `piezo_v` the
    applied piezo voltage. `f_q` optionally pins the current qubit
    frequency directly; when None it is derived from the flux bias.
    """

    qubit: QubitParams
    resonator: ResonatorParams
    tls: TlsParams
    decoherence: DecoherenceParams = DecoherenceParams()
    flux: float = 0.0
    piezo_v: float = 0.0
    f_q: float | None = None

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.qubit.n_levels, self.resonator.n_levels, 2)

    @property
    def dim(self) -> int:
        nq, nr, nt = self.dims
        return nq * nr * nt


# ---------------------------------------------------------------------------
# closed-form pieces needed by the builders

def capacitance_for_charging_energy(e_c_ghz: float) -> float:
    """C_tot in fF satisfying C_tot = e^2 / (2 E_c h)."""
    if e_c_ghz <= 0:
        raise ParamError(f"E_c must be positive, got {e_c_ghz}")
    c_farad = E_CHARGE**2 / (2.0 * e_c_ghz * 1e9 * H_PLANCK)
    return c_farad / 1e-15


def josephson_energy_max(q: QubitParams) -> float:
    """E_J at zero flux in GHz, from h f_q = sqrt(8 E_C E_J) - E_C."""
    return (q.f_q_max + q.e_c) ** 2 / (8.0 * q.e_c)


def qubit_frequency_at_flux(q: QubitParams, phi: float) -> float:
    """Transmon frequency in GHz at flux bias `phi` (units of Phi_0).

    Uses E_J(phi) = E_J_max sqrt(cos^2(pi phi) + d^2 sin^2(pi phi)) and
    f_q = sqrt(8 E_C E_J) - E_C. Raises outside the transmon regime
    (E_J <= E_C).
    """
    ej = josephson_energy_max(q) * math.sqrt(
        math.cos(math.pi * phi) ** 2 + q.d**2 * math.sin(math.pi * phi) ** 2
    )
    if ej <= q.e_c:
        raise TransmonRegimeError(
            f"E_J(phi={phi}) = {ej:.4g} GHz <= E_c = {q.e_c} GHz: "
            "transmon approximation invalid"
        )
    return math.sqrt(8.0 * q.e_c * ej) - q.e_c


def qubit_frequency(p: SystemParams) -> float:
    """Current qubit frequency in GHz (explicit override or flux formula)."""
    if p.f_q is not None:
        return p.f_q
    return qubit_frequency_at_flux(p.qubit, p.flux)


def tls_frequency(tls: TlsParams, piezo_v: float) -> float:
    """TLS resonance in GHz along the strain hyperbola; >= delta0 always."""
    eps = tls.gamma * 1e-3 * (piezo_v - tls.v0)   # GHz
    return math.hypot(tls.delta0, eps)


def resonance_piezo(tls: TlsParams, f_target: float, branch: int = +1) -> float:
    """Piezo voltage where f_TLS = f_target on the chosen hyperbola branch.

    Raises ParamError when f_target < delta0 (no solution) or gamma = 0.
    """
    if f_target < tls.delta0:
        raise ParamError(f"f_target = {f_target} GHz below the hyperbola floor {tls.delta0} GHz")
    if tls.gamma == 0:
        raise ParamError("gamma = 0: TLS frequency is not strain-tunable")
    eps = math.sqrt(f_target**2 - tls.delta0**2)
    return tls.v0 + (1 if branch >= 0 else -1) * eps / (tls.gamma * 1e-3)


# ---------------------------------------------------------------------------
# Hamiltonian builders (all outputs in rad/us)

def qubit_hamiltonian(q: QubitParams, f_q: float) -> Operator:
    """Duffing-oscillator qubit Hamiltonian, diagonal in the Fock basis."""
    if f_q <= 0:
        raise ParamError(f"qubit frequency must be positive, got {f_q}")
    w = ghz_to_angular(f_q)
    alpha = ghz_to_angular(q.alpha_q)
    n = np.arange(q.n_levels, dtype=float)
    return Operator(np.diag(w * n + 0.5 * alpha * n * (n - 1.0)))


def resonator_hamiltonian(r: ResonatorParams) -> Operator:
    w = ghz_to_angular(r.f_res)
    return Operator(w * number_operator(r.n_levels).data)


def tls_hamiltonian(tls: TlsParams, piezo_v: float) -> Operator:
    w = ghz_to_angular(tls_frequency(tls, piezo_v))
    return Operator(w * number_operator(2).data)


def _subsystem_ops(p: SystemParams):
    dims = p.dims
    q = embed(ladder_destroy(dims[0]), 0, dims)
    r = embed(ladder_destroy(dims[1]), 1, dims)
    t = embed(ladder_destroy(dims[2]), 2, dims)
    return q, r, t


def full_hamiltonian(p: SystemParams, rwa: bool = False) -> Operator:
    """Composite Hamiltonian H_Q + H_R + H_TLS + couplings, in rad/us.

    Transverse couplings are bilinear, g_qr (q+q')(r+r') and
    g_x (q+q')(t+t'); the longitudinal term is g_z (q'q)(t't). With
    `rwa=True` only the excitation-conserving coupling parts are kept
    (q r' + q' r etc.), which is the form used in the rotating frame of
    the drive.
    """
    dims = p.dims
    f_q = qubit_frequency(p)
    h = embed(qubit_hamiltonian(p.qubit, f_q), 0, dims)
    h = h + embed(resonator_hamiltonian(p.resonator), 1, dims)
    h = h + embed(tls_hamiltonian(p.tls, p.piezo_v), 2, dims)

    q, r, t = _subsystem_ops(p)
    g_qr = mhz_to_angular(p.resonator.g_qr)
    g_x = mhz_to_angular(p.tls.g_x)
    g_z = mhz_to_angular(p.tls.g_z)

    def coupling(a: Operator, b: Operator, g: float) -> Operator:
        if rwa:
            term = a @ b.dagger() + a.dagger() @ b
        else:
            term = (a + a.dagger()) @ (b + b.dagger())
        return g * term

    if g_qr != 0.0:
        h = h + coupling(q, r, g_qr)
    if g_x != 0.0:
        h = h + coupling(q, t, g_x)
    if g_z != 0.0:
        h = h + g_z * ((q.dagger() @ q) @ (t.dagger() @ t))
    return h


def total_excitation_number(p: SystemParams) -> Operator:
    """n_q + n_r + n_t on the composite space (rotating-frame generator)."""
    dims = p.dims
    out = embed(number_operator(dims[0]), 0, dims)
    out = out + embed(number_operator(dims[1]), 1, dims)
    out = out + embed(number_operator(dims[2]), 2, dims)
    return out


def qubit_drive_operator(p: SystemParams) -> Operator:
    """Unscaled drive coupling (q + q') on the qubit factor."""
    dims = p.dims
    a = ladder_destroy(dims[0])
    return embed(a + a.dagger(), 0, dims)


@dataclass(frozen=True)
class DriveTerm:
    """Drive description consumed by the dynamics engine.

    `coupling` is (Omega/2)(q + q') in rad/us. In the lab frame the
    time-dependent Hamiltonian is ``2 cos(w_d t) * coupling``; in the
    rotating frame after the RWA the drive contributes `coupling` itself.
    """

    coupling: Operator
    amplitude_mhz: float
    frequency_ghz: float

    @property
    def omega_d(self) -> float:
        """Drive angular frequency in rad/us."""
        return ghz_to_angular(self.frequency_ghz)


def drive_hamiltonian(p: SystemParams, amplitude_mhz: float, frequency_ghz: float) -> DriveTerm:
    if amplitude_mhz < 0:
        raise ParamError(f"drive amplitude must be >= 0, got {amplitude_mhz}")
    half_omega = 0.5 * mhz_to_angular(amplitude_mhz)
    return DriveTerm(
        coupling=half_omega * qubit_drive_operator(p),
        amplitude_mhz=amplitude_mhz,
        frequency_ghz=frequency_ghz,
    )


def collapse_operators(p: SystemParams) -> list[tuple[Operator, float]]:
    """Lindblad collapse operators as (operator, rate in 1/us) pairs.

    Relaxation enters through lowering operators at rate Gamma_1 (kappa
    for the resonator); pure dephasing through number operators at rate
    2 Gamma_phi with Gamma_phi = Gamma_2 - Gamma_1 / 2. A Gamma_2 below
    Gamma_1 / 2 is unphysical; it is clamped to zero with a warning so
    that transient fit iterates cannot crash a run.
    """
    dims = p.dims
    dec = p.decoherence
    out: list[tuple[Operator, float]] = []

    def dephasing_rate(gamma1: float, gamma2: float, label: str) -> float:
        phi = gamma2 - 0.5 * gamma1
        if phi < 0:
            warnings.warn(
                f"{label}: Gamma_2 = {gamma2} < Gamma_1/2 = {0.5 * gamma1}; "
                "clamping pure dephasing to 0",
                stacklevel=3,
            )
            return 0.0
        return phi

    if dec.gamma1_q > 0:
        out.append((embed(ladder_destroy(dims[0]), 0, dims), dec.gamma1_q))
    phi_q = dephasing_rate(dec.gamma1_q, dec.gamma2_q, "qubit")
    if phi_q > 0:
        out.append((embed(number_operator(dims[0]), 0, dims), 2.0 * phi_q))

    if dec.kappa_res > 0:
        out.append((embed(ladder_destroy(dims[1]), 1, dims), dec.kappa_res))

    if dec.gamma1_tls > 0:
        out.append((embed(ladder_destroy(dims[2]), 2, dims), dec.gamma1_tls))
    phi_t = dephasing_rate(dec.gamma1_tls, dec.gamma2_tls, "TLS")
    if phi_t > 0:
        out.append((embed(number_operator(dims[2]), 2, dims), 2.0 * phi_t))

    return out


def bare_state_label(index: int, dims: Sequence[int]) -> str:
    """Label like 'q1r0t1' for a bare product-basis index."""
    nq, nr, nt = dims
    q, rem = divmod(index, nr * nt)
    r, t = divmod(rem, nt)
    return f"q{q}r{r}t{t}"


def with_levels(p: SystemParams, n_q: int, n_r: int) -> SystemParams:
    """Copy of `p` with different truncation levels."""
    return dataclasses.replace(
        p,
        qubit=dataclasses.replace(p.qubit, n_levels=n_q),
        resonator=dataclasses.replace(p.resonator, n_levels=n_r),
    )


@dataclass(frozen=True)
class TruncationReport:
    n_levels: tuple[int, int]
    n_levels_doubled: tuple[int, int]
    max_drift_ghz: float
    eigenvalues_ghz: tuple[float, ...]


def truncation_drift(p: SystemParams, n_eigenvalues: int = 8) -> TruncationReport:
    """Doubles qubit/resonator levels and reports the eigenvalue drift.

    The drift is the largest absolute change (GHz) among the lowest
    `n_eigenvalues` of the full Hamiltonian.
    """
    from .operators import eigh  # local import keeps module load light

    w1, _ = eigh(full_hamiltonian(p))
    p2 = with_levels(p, 2 * p.qubit.n_levels, 2 * p.resonator.n_levels)
    w2, _ = eigh(full_hamiltonian(p2))
    k = min(n_eigenvalues, len(w1))
    drift = np.max(np.abs(w1[:k] - w2[:k])) / ghz_to_angular(1.0)
    eigs = tuple((w1[:k] - w1[0]) / ghz_to_angular(1.0))
    return TruncationReport(
        n_levels=(p.qubit.n_levels, p.resonator.n_levels),
        n_levels_doubled=(p2.qubit.n_levels, p2.resonator.n_levels),
        max_drift_ghz=float(drift),
        eigenvalues_ghz=eigs,
    )


# ---------------------------------------------------------------------------
# parameter file format: flat `key = value` lines, `#` comments

_REQUIRED_KEYS = ("f_q_max", "E_c", "f_res", "g_qr", "delta0", "gamma", "V0", "g_x")

_OPTIONAL_KEYS = (
    "C_tot", "d", "I_c", "A_JJ", "n_levels_q", "f_q",
    "n_levels_r",
    "g_z", "p_bar", "barrier_t",
    "gamma1_q", "gamma2_q", "gamma1_tls", "gamma2_tls", "kappa_res",
    "flux", "piezo_v",
)

PARAM_KEYS = _REQUIRED_KEYS + _OPTIONAL_KEYS

_INT_KEYS = {"n_levels_q", "n_levels_r"}


def parse_params(text: str) -> SystemParams:
    """Parse the flat key-value parameter format.

    Unknown keys are a hard error listing every offender; duplicate keys
    are rejected as well.
    """
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParamFileError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key in values:
            raise ParamFileError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = float(val)
        except ValueError as exc:
            raise ParamFileError(f"line {lineno}: bad numeric value for {key!r}: {val!r}") from exc
    return params_from_mapping(values)


def params_from_mapping(values: Mapping[str, float]) -> SystemParams:
    unknown = sorted(set(values) - set(PARAM_KEYS))
    if unknown:
        raise ParamFileError(f"unknown parameter key(s): {', '.join(unknown)}")
    missing = sorted(set(_REQUIRED_KEYS) - set(values))
    if missing:
        raise ParamFileError(f"missing required parameter key(s): {', '.join(missing)}")

    def get(key: str, default=None):
        return values.get(key, default)

    def get_int(key: str, default: int) -> int:
        v = values.get(key)
        if v is None:
            return default
        if float(v) != int(v):
            raise ParamFileError(f"{key} must be an integer, got {v}")
        return int(v)

    qubit = QubitParams(
        f_q_max=float(values["f_q_max"]),
        e_c=float(values["E_c"]),
        d=float(get("d", 0.0)),
        c_tot=get("C_tot"),
        i_c=get("I_c"),
        a_jj=get("A_JJ"),
        n_levels=get_int("n_levels_q", 6),
    )
    resonator = ResonatorParams(
        f_res=float(values["f_res"]),
        g_qr=float(values["g_qr"]),
        n_levels=get_int("n_levels_r", 6),
    )
    tls = TlsParams(
        delta0=float(values["delta0"]),
        gamma=float(values["gamma"]),
        v0=float(values["V0"]),
        g_x=float(values["g_x"]),
        g_z=float(get("g_z", 0.0)),
        p_bar=get("p_bar"),
        barrier_t=float(get("barrier_t", 2.0)),
    )
    dec = DecoherenceParams(
        gamma1_q=float(get("gamma1_q", 0.0)),
        gamma2_q=float(get("gamma2_q", 0.0)),
        gamma1_tls=float(get("gamma1_tls", 0.0)),
        gamma2_tls=float(get("gamma2_tls", 0.0)),
        kappa_res=float(get("kappa_res", 0.0)),
    )
    f_q = get("f_q")
    return SystemParams(
        qubit=qubit,
        resonator=resonator,
        tls=tls,
        decoherence=dec,
        flux=float(get("flux", 0.0)),
        piezo_v=float(get("piezo_v", 0.0)),
        f_q=None if f_q is None else float(f_q),
    )


def params_to_mapping(p: SystemParams) -> dict[str, float]:
    out: dict[str, float] = {
        "f_q_max": p.qubit.f_q_max,
        "E_c": p.qubit.e_c,
        "d": p.qubit.d,
        "n_levels_q": p.qubit.n_levels,
        "f_res": p.resonator.f_res,
        "g_qr": p.resonator.g_qr,
        "n_levels_r": p.resonator.n_levels,
        "delta0": p.tls.delta0,
        "gamma": p.tls.gamma,
        "V0": p.tls.v0,
        "g_x": p.tls.g_x,
        "g_z": p.tls.g_z,
        "barrier_t": p.tls.barrier_t,
        "gamma1_q": p.decoherence.gamma1_q,
        "gamma2_q": p.decoherence.gamma2_q,
        "gamma1_tls": p.decoherence.gamma1_tls,
        "gamma2_tls": p.decoherence.gamma2_tls,
        "kappa_res": p.decoherence.kappa_res,
        "flux": p.flux,
        "piezo_v": p.piezo_v,
    }
    if p.qubit.c_tot is not None:
        out["C_tot"] = p.qubit.c_tot
    if p.qubit.i_c is not None:
        out["I_c"] = p.qubit.i_c
    if p.qubit.a_jj is not None:
        out["A_JJ"] = p.qubit.a_jj
    if p.tls.p_bar is not None:
        out["p_bar"] = p.tls.p_bar
    if p.f_q is not None:
        out["f_q"] = p.f_q
    return out


def format_params(p: SystemParams) -> str:
    lines = [f"{key} = {value!r}" for key, value in params_to_mapping(p).items()]
    return "\n".join(lines) + "\n"


def load_params(path: str | Path) -> SystemParams:
    return parse_params(Path(path).read_text(encoding="utf-8"))


def save_params(p: SystemParams, path: str | Path) -> None:
    Path(path).write_text(format_params(p), encoding="utf-8")
