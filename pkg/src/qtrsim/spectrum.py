"""Eigenvalue spectroscopy: transition catalogs, multi-photon
classification by integer photon division, strain/flux sweeps, branch
tracking and anti-crossing gap extraction.

An n-photon entry at frequency f means the drive supplies n photons of
energy h*f to bridge an exact eigenvalue difference n*f. Weights are
drive matrix elements |<j|D|i>| for single-photon lines; for n > 1 they
are a visibility proxy, the largest product of intermediate
single-photon elements along any n-step path, not a transition rate.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import model
from .constants import GHZ_TO_ANGULAR
from .operators import Operator, eigh
from .parallel import parallel_map


class NoCrossingError(ValueError):
    """Sweep does not bracket an anti-crossing minimum."""


@dataclass(frozen=True)
class Transition:
    from_idx: int
    to_idx: int
    freq: float          # GHz, (E_to - E_from) / n_photons
    n_photons: int
    weight: float        # dimensionless drive matrix-element magnitude
    from_label: str
    to_label: str


@dataclass(frozen=True)
class TransitionCatalog:
    sweep_value: float
    transitions: tuple[Transition, ...]   # sorted by freq

    def frequencies(self) -> np.ndarray:
        return np.array([t.freq for t in self.transitions])

    def select(self, freq_window: tuple[float, float] | None = None,
               n_photons: int | None = None) -> list[Transition]:
        out = []
        for t in self.transitions:
            if n_photons is not None and t.n_photons != n_photons:
                continue
            if freq_window is not None and not freq_window[0] <= t.freq <= freq_window[1]:
                continue
            out.append(t)
        return out


def eigensystem_ghz(h: Operator) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in GHz (ascending) and eigenvector columns."""
    w, v = eigh(h)
    return w / GHZ_TO_ANGULAR, v


def dominant_labels(vectors: np.ndarray, dims: Sequence[int]) -> list[str]:
    """Bare-state label of each eigenvector column by largest amplitude.

    np.argmax returns the first maximum, which breaks ties toward the
    lower bare index.
    """
    idx = np.argmax(np.abs(vectors), axis=0)
    return [model.bare_state_label(int(b), dims) for b in idx]


def _multi_photon_weights(d_abs: np.ndarray, max_photons: int) -> list[np.ndarray]:
    """W[n][i, j]: best n-step product of single-photon elements i -> j."""
    weights = [d_abs]
    w = d_abs
    for _ in range(1, max_photons):
        w = np.max(w[:, :, None] * d_abs[None, :, :], axis=1)
        weights.append(w)
    return weights


def transition_catalog(
    h: Operator,
    drive_op: Operator,
    max_photons: int = 3,
    ground_only: bool = False,
    freq_window: tuple[float, float] | None = None,
    weight_floor: float = 1e-3,
    dims: Sequence[int] | None = None,
    sweep_value: float = math.nan,
) -> TransitionCatalog:
    """Catalog of transitions between eigenstates of `h`.

    For each eigenpair (i, j), i < j, and each n <= max_photons the entry
    (E_j - E_i)/n is included if it falls inside `freq_window`. With
    `ground_only` the initial state is restricted to the ground state.
    `weight_floor` drops entries whose weight is below this fraction of
    the strongest single-photon element of the drive operator.
    """
    if max_photons < 1:
        raise ValueError(f"max_photons must be >= 1, got {max_photons}")
    freqs, vectors = eigensystem_ghz(h)
    dim = len(freqs)
    if dims is not None:
        labels = dominant_labels(vectors, dims)
    else:
        labels = [str(k) for k in range(dim)]

    d_eig = np.abs(vectors.conj().T @ drive_op.data @ vectors)
    weights = _multi_photon_weights(d_eig, max_photons)
    strongest = float(np.max(d_eig - np.diag(np.diag(d_eig)))) if dim > 1 else 0.0
    floor = weight_floor * strongest

    initial = [0] if ground_only else range(dim)
    found: list[Transition] = []
    for i in initial:
        for j in range(i + 1, dim):
            gap = freqs[j] - freqs[i]
            if gap <= 0:
                continue
            for n in range(1, max_photons + 1):
                f = gap / n
                if freq_window is not None and not freq_window[0] <= f <= freq_window[1]:
                    continue
                w = float(weights[n - 1][i, j])
                if w < floor:
                    continue
                found.append(Transition(i, j, float(f), n, w, labels[i], labels[j]))
    found.sort(key=lambda t: (t.freq, t.n_photons, t.to_idx))
    return TransitionCatalog(sweep_value=sweep_value, transitions=tuple(found))


@dataclass(frozen=True)
class SweepSpec:
    axis: str                      # 'piezo_v' or 'flux'
    values: tuple[float, ...]

    def __post_init__(self):
        if self.axis not in ("piezo_v", "flux"):
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        vals = np.asarray(self.values, dtype=float)
        if len(vals) < 1:
            raise ValueError("sweep needs at least one point")
        if len(vals) > 1:
            steps = np.diff(vals)
            if not (np.all(steps > 0) or np.all(steps < 0)):
                raise ValueError("sweep grid must be monotone")
        object.__setattr__(self, "values", tuple(float(v) for v in vals))


def params_at(p: model.SystemParams, axis: str, value: float) -> model.SystemParams:
    if axis == "piezo_v":
        return dataclasses.replace(p, piezo_v=value)
    if axis == "flux":
        return dataclasses.replace(p, flux=value, f_q=None)
    raise ValueError(f"unknown sweep axis {axis!r}")


def _catalog_at(args) -> TransitionCatalog:
    p, axis, value, window, max_photons, ground_only, weight_floor = args
    pv = params_at(p, axis, value)
    h = model.full_hamiltonian(pv)
    drive = model.qubit_drive_operator(pv)
    return transition_catalog(
        h, drive,
        max_photons=max_photons,
        ground_only=ground_only,
        freq_window=window,
        weight_floor=weight_floor,
        dims=pv.dims,
        sweep_value=value,
    )


def sweep_transitions(
    p: model.SystemParams,
    sweep: SweepSpec,
    freq_window: tuple[float, float],
    max_photons: int = 3,
    ground_only: bool = True,
    weight_floor: float = 1e-3,
    workers: int = 1,
) -> list[TransitionCatalog]:
    """One transition catalog per sweep point, merged in sweep order.

    Sweep points are independent and evaluated through `parallel_map`;
    results are deterministic regardless of the worker count.
    """
    tasks = [
        (p, sweep.axis, v, freq_window, max_photons, ground_only, weight_floor)
        for v in sweep.values
    ]
    return parallel_map(_catalog_at, tasks, workers=workers)


# ---------------------------------------------------------------------------
# branch tracking

def track_eigenbranches(
    p: model.SystemParams,
    sweep: SweepSpec,
) -> np.ndarray:
    """Eigenfrequencies (GHz) along the sweep with continuous branch labels.

    Ascending eigenvalue order swaps labels at crossings; this relabels
    by greedy maximal eigenvector overlap |<v_k(s)|v_j(s+ds)>| between
    adjacent sweep points. Returns an array of shape (n_sweep, dim)
    whose column k follows one branch across the whole sweep.
    """
    branches = None
    prev_vectors = None
    labels = None
    for k, value in enumerate(sweep.values):
        pv = params_at(p, sweep.axis, value)
        freqs, vectors = eigensystem_ghz(model.full_hamiltonian(pv))
        if branches is None:
            branches = np.empty((len(sweep.values), len(freqs)))
            labels = np.arange(len(freqs))
        else:
            overlap = np.abs(prev_vectors.conj().T @ vectors)
            perm = _greedy_match(overlap)
            # slot i of the previous point continues in slot perm[i]
            new_labels = np.empty_like(labels)
            new_labels[perm] = labels
            labels = new_labels
        branches[k, labels] = freqs
        prev_vectors = vectors
    return branches


def _greedy_match(overlap: np.ndarray) -> np.ndarray:
    """perm[i] = current-point slot matched to previous-point slot i."""
    n = overlap.shape[0]
    perm = np.full(n, -1, dtype=int)
    taken = np.zeros(n, dtype=bool)
    order = np.argsort(overlap, axis=None)[::-1]
    assigned = 0
    for flat in order:
        i, j = divmod(int(flat), n)
        if perm[i] >= 0 or taken[j]:
            continue
        perm[i] = j
        taken[j] = True
        assigned += 1
        if assigned == n:
            break
    return perm


@dataclass(frozen=True)
class BranchSelector:
    """Selects the two branches of an anti-crossing inside a catalog.

    Transitions must match `n_photons` and lie inside `freq_window`; the
    two highest-weight lines per sweep point define the branch pair.
    """

    freq_window: tuple[float, float]
    n_photons: int = 1


@dataclass(frozen=True)
class GapResult:
    gap_mhz: float
    location: float            # sweep value of the minimum
    degenerate: bool
    separations_mhz: tuple[float, ...]
    sweep_values: tuple[float, ...]


def anticrossing_gap(catalogs: Sequence[TransitionCatalog],
                     selector: BranchSelector) -> GapResult:
    """Minimal branch separation along a sweep and its location.

    The separation-squared is locally parabolic around an avoided
    crossing, so the discrete minimum is refined by fitting a parabola
    to d^2(s); this reproduces the exact 2x2 hyperbola gap to floating
    point accuracy. Half the gap is the reported coupling strength.
    Raises NoCrossingError when the sampled minimum sits on the sweep
    edge (the sweep does not bracket the crossing).
    """
    svals: list[float] = []
    seps: list[float] = []
    for cat in catalogs:
        lines = cat.select(selector.freq_window, selector.n_photons)
        if len(lines) < 2:
            continue
        top = sorted(lines, key=lambda t: t.weight, reverse=True)[:2]
        seps.append(abs(top[0].freq - top[1].freq) * 1e3)   # MHz
        svals.append(cat.sweep_value)
    if len(seps) < 3:
        raise NoCrossingError(
            f"only {len(seps)} sweep points carry both branches in "
            f"window {selector.freq_window}; cannot bracket a crossing"
        )
    s = np.array(svals)
    d = np.array(seps)
    k = int(np.argmin(d))
    if k == 0 or k == len(d) - 1:
        raise NoCrossingError(
            f"separation minimum at sweep edge (s = {s[k]:.6g}); "
            "the sweep does not bracket the crossing"
        )
    # parabola through (s, d^2) at the minimum and neighbors
    coeff = np.polyfit(s[k - 1:k + 2], d[k - 1:k + 2] ** 2, 2)
    if coeff[0] > 0:
        s_min = -coeff[1] / (2 * coeff[0])
        d2_min = float(np.polyval(coeff, s_min))
    else:
        s_min = float(s[k])
        d2_min = float(d[k] ** 2)
    if not (s[k - 1] <= s_min <= s[k + 1]):
        s_min = float(s[k])
        d2_min = float(d[k] ** 2)
    gap = math.sqrt(max(d2_min, 0.0))
    degenerate = d2_min <= 0.0 or gap < 1e-3   # below ~kHz solver resolution
    return GapResult(
        gap_mhz=float(gap),
        location=float(s_min),
        degenerate=degenerate,
        separations_mhz=tuple(float(x) for x in d),
        sweep_values=tuple(float(x) for x in s),
    )


# ---------------------------------------------------------------------------
# longitudinal-coupling signature

def two_photon_shift_vs_gz(
    p: model.SystemParams,
    gz_values_mhz: Sequence[float],
) -> tuple[np.ndarray, np.ndarray]:
    """Shift of the central two-photon line at qubit-TLS resonance vs g_z.

    The qubit is tuned onto the TLS (strain set from the hyperbola) and
    the tracked line is the two-photon transition into the eigenstate of
    dominant |1 qubit, 1 TLS> character; its frequency is reported
    relative to the g_z = 0 value. Returns (g_z values, shifts in MHz).
    """
    f_q = model.qubit_frequency(p)
    piezo = model.resonance_piezo(p.tls, f_q)
    base = dataclasses.replace(p, piezo_v=piezo)

    def central_line_ghz(params: model.SystemParams) -> float:
        freqs, vectors = eigensystem_ghz(model.full_hamiltonian(params))
        labels = dominant_labels(vectors, params.dims)
        target = "q1r0t1"
        try:
            idx = labels.index(target)
        except ValueError as exc:
            raise ValueError(f"no eigenstate with dominant character {target}") from exc
        return (freqs[idx] - freqs[0]) / 2.0

    gz = np.asarray(gz_values_mhz, dtype=float)
    ref = central_line_ghz(
        dataclasses.replace(base, tls=dataclasses.replace(base.tls, g_z=0.0)))
    shifts = np.empty_like(gz)
    for i, g in enumerate(gz):
        pv = dataclasses.replace(base, tls=dataclasses.replace(base.tls, g_z=float(g)))
        shifts[i] = (central_line_ghz(pv) - ref) * 1e3   # MHz
    return gz, shifts


def catalog_rows(catalogs: Sequence[TransitionCatalog]) -> list[tuple]:
    """Flat (sweep_value, freq_GHz, n_photons, weight, from, to) rows."""
    rows = []
    for cat in catalogs:
        for t in cat.transitions:
            rows.append((cat.sweep_value, t.freq, t.n_photons, t.weight,
                         t.from_label, t.to_label))
    return rows
