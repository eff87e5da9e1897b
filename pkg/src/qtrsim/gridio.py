"""Artifact file formats shared by the CLI, the service and the tests.

Everything round-trips: reading an artifact back and re-emitting it
reproduces the bytes. Floats are rendered with repr(), the shortest
representation that survives a parse; NaN is spelled ``nan``.

Grid CSV layout::

    # key = value            <- metadata echo, one line per key
    piezo_v,6.5,6.51,...     <- frequency-axis header (GHz)
    40.0,0.001,0.002,...     <- sweep coordinate, then one cell per freq

Catalog CSV columns: sweep_value, freq_GHz, n_photons, weight,
from_label, to_label, with the same ``#`` metadata header.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dynamics import SpectroscopyGrid
from .spectrum import Transition, TransitionCatalog

ARTIFACT_VERSION = "qtrsim-artifact-1"


def _fmt(x: float) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def render_metadata(metadata: Mapping[str, object]) -> str:
    lines = [f"# artifact_version = {ARTIFACT_VERSION}"]
    for key, value in metadata.items():
        if key == "artifact_version":
            continue
        lines.append(f"# {key} = {value}")
    return "\n".join(lines) + "\n"


def parse_metadata(text: str) -> tuple[dict[str, str], list[str]]:
    """Split '#'-prefixed metadata from the data lines."""
    meta: dict[str, str] = {}
    body: list[str] = []
    for raw in text.splitlines():
        if raw.startswith("#"):
            stripped = raw[1:].strip()
            if "=" in stripped:
                key, _, value = stripped.partition("=")
                meta[key.strip()] = value.strip()
        elif raw.strip():
            body.append(raw)
    return meta, body


def grid_to_csv(grid: SpectroscopyGrid, metadata: Mapping[str, object] | None = None,
                sweep_name: str = "piezo_v") -> str:
    meta = dict(grid.metadata)
    if metadata:
        meta.update(metadata)
    out = [render_metadata(meta).rstrip("\n")]
    out.append(",".join([sweep_name] + [_fmt(f) for f in grid.freq_values]))
    for i, sval in enumerate(grid.sweep_values):
        out.append(",".join([_fmt(sval)] + [_fmt(v) for v in grid.values[i]]))
    return "\n".join(out) + "\n"


def grid_from_csv(text: str) -> SpectroscopyGrid:
    meta, body = parse_metadata(text)
    if not body:
        raise ValueError("grid CSV has no data rows")
    header = body[0].split(",")
    freqs = np.array([float(x) for x in header[1:]])
    sweep = []
    rows = []
    for line in body[1:]:
        cells = line.split(",")
        if len(cells) != len(freqs) + 1:
            raise ValueError(f"grid row has {len(cells)} cells, expected {len(freqs) + 1}")
        sweep.append(float(cells[0]))
        rows.append([float(x) for x in cells[1:]])
    return SpectroscopyGrid(
        sweep_values=np.array(sweep),
        freq_values=freqs,
        values=np.array(rows),
        metadata=dict(meta),
    )


def grid_to_binary(grid: SpectroscopyGrid, path: str | Path,
                   metadata: Mapping[str, object] | None = None,
                   sweep_name: str = "piezo_v") -> None:
    """Raw float64 row-major matrix plus a JSON sidecar (<path>.meta.json)."""
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(grid.values, dtype=np.float64).tobytes())
    meta = dict(grid.metadata)
    if metadata:
        meta.update(metadata)
    sidecar = {
        "artifact_version": ARTIFACT_VERSION,
        "sweep_name": sweep_name,
        "sweep_values": [float(v) for v in grid.sweep_values],
        "freq_values_ghz": [float(f) for f in grid.freq_values],
        "shape": list(grid.values.shape),
        "dtype": "float64",
        "metadata": {k: str(v) for k, v in meta.items()},
    }
    Path(str(path) + ".meta.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def grid_from_binary(path: str | Path) -> SpectroscopyGrid:
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".meta.json").read_text(encoding="utf-8"))
    shape = tuple(sidecar["shape"])
    values = np.frombuffer(path.read_bytes(), dtype=np.float64).reshape(shape).copy()
    return SpectroscopyGrid(
        sweep_values=np.array(sidecar["sweep_values"]),
        freq_values=np.array(sidecar["freq_values_ghz"]),
        values=values,
        metadata=dict(sidecar["metadata"]),
    )


CATALOG_COLUMNS = ("sweep_value", "freq_GHz", "n_photons", "weight",
                   "from_label", "to_label")


def catalogs_to_csv(catalogs: Sequence[TransitionCatalog],
                    metadata: Mapping[str, object] | None = None) -> str:
    out = [render_metadata(metadata or {}).rstrip("\n")]
    out.append(",".join(CATALOG_COLUMNS))
    for cat in catalogs:
        for t in cat.transitions:
            out.append(",".join([
                _fmt(cat.sweep_value), _fmt(t.freq), str(t.n_photons),
                _fmt(t.weight), t.from_label, t.to_label,
            ]))
    return "\n".join(out) + "\n"


def catalogs_from_csv(text: str) -> list[TransitionCatalog]:
    meta, body = parse_metadata(text)
    if not body or body[0].split(",") != list(CATALOG_COLUMNS):
        raise ValueError("not a transition-catalog CSV")
    groups: dict[float, list[Transition]] = {}
    order: list[float] = []
    for line in body[1:]:
        sval_s, freq_s, n_s, w_s, lfrom, lto = line.split(",")
        sval = float(sval_s)
        if sval not in groups:
            groups[sval] = []
            order.append(sval)
        groups[sval].append(Transition(
            from_idx=-1, to_idx=-1, freq=float(freq_s), n_photons=int(n_s),
            weight=float(w_s), from_label=lfrom, to_label=lto,
        ))
    return [TransitionCatalog(sweep_value=s, transitions=tuple(groups[s]))
            for s in order]


def fit_report_text(result, problem=None) -> str:
    """Human-readable fit summary."""
    lines = ["fit result", "=" * 40]
    lines.append(f"converged: {result.converged}")
    lines.append(f"starts: {result.n_starts}")
    lines.append(f"loss: {result.loss:.6e}")
    lines.append(f"residual rms: {result.residual_rms_mhz:.4f} MHz")
    lines.append(f"observations: {len(result.residuals_mhz)}"
                 + (f" ({result.n_sentinel} unmatched)" if result.n_sentinel else ""))
    lines.append("")
    lines.append(f"{'parameter':<10}{'value':>16}{'1-sigma':>14}")
    for name, value in result.best_values.items():
        sigma = result.uncertainties.get(name, math.nan)
        lines.append(f"{name:<10}{value:>16.6g}{sigma:>14.3g}")
    return "\n".join(lines) + "\n"


def residuals_to_csv(result, observations) -> str:
    out = ["sweep_value,freq_GHz,n_photons,residual_MHz"]
    for obs, r in zip(observations, result.residuals_mhz):
        n = "" if obs.n_photons is None else str(obs.n_photons)
        out.append(f"{_fmt(obs.sweep_value)},{_fmt(obs.freq)},{n},{_fmt(r)}")
    return "\n".join(out) + "\n"


def peaks_to_csv(observations) -> str:
    out = ["sweep_value,freq_GHz,amplitude,fwhm_MHz,n_photons"]
    for obs in observations:
        n = "" if obs.n_photons is None else str(obs.n_photons)
        out.append(f"{_fmt(obs.sweep_value)},{_fmt(obs.freq)},{_fmt(obs.amplitude)},"
                   f"{_fmt(obs.fwhm_mhz)},{n}")
    return "\n".join(out) + "\n"


def peaks_from_csv(text: str):
    from .fitting import PeakObservation

    meta, body = parse_metadata(text)
    if not body or not body[0].startswith("sweep_value,freq_GHz"):
        raise ValueError("not a peak-observation CSV")
    out = []
    for line in body[1:]:
        sval, freq, amp, fwhm, n = (line.split(",") + [""])[:5]
        out.append(PeakObservation(
            sweep_value=float(sval), freq=float(freq), amplitude=float(amp),
            fwhm_mhz=float(fwhm), n_photons=int(n) if n.strip() else None,
        ))
    return out


def bench_to_jsonl(rows: Sequence[Mapping[str, object]]) -> str:
    return "\n".join(json.dumps(dict(row), sort_keys=True) for row in rows) + "\n"


def bench_from_jsonl(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]
