import math

import numpy as np
import pytest

from qtrsim import gridio
from qtrsim.dynamics import SpectroscopyGrid
from qtrsim.fitting import PeakObservation
from qtrsim.spectrum import Transition, TransitionCatalog


def sample_grid():
    values = np.array([[0.1, 0.25, math.nan], [0.0, 1.0, 0.5]])
    return SpectroscopyGrid(
        sweep_values=np.array([40.0, 41.5]),
        freq_values=np.array([7.30, 7.31, 7.32]),
        values=values,
        metadata={"amplitude_mhz": 3.0, "cells": 6},
    )


class TestGridCsv:
    def test_round_trip_bytes_identical(self):
        grid = sample_grid()
        text = gridio.grid_to_csv(grid, {"command": "drive-sim"})
        again = gridio.grid_from_csv(text)
        text2 = gridio.grid_to_csv(again)
        assert text2 == text

    def test_nan_spelled_nan(self):
        text = gridio.grid_to_csv(sample_grid())
        assert ",nan" in text
        parsed = gridio.grid_from_csv(text)
        assert math.isnan(parsed.values[0, 2])

    def test_metadata_echo(self):
        text = gridio.grid_to_csv(sample_grid(), {"workers": 4})
        meta, _ = gridio.parse_metadata(text)
        assert meta["workers"] == "4"
        assert meta["artifact_version"] == gridio.ARTIFACT_VERSION

    def test_ragged_row_rejected(self):
        text = gridio.grid_to_csv(sample_grid())
        broken = text.rstrip("\n").rsplit(",", 1)[0] + "\n"
        with pytest.raises(ValueError):
            gridio.grid_from_csv(broken)


def test_grid_binary_round_trip(tmp_path):
    grid = sample_grid()
    path = tmp_path / "grid.f64"
    gridio.grid_to_binary(grid, path, {"command": "drive-sim"})
    again = gridio.grid_from_binary(path)
    assert np.array_equal(grid.values, again.values, equal_nan=True)
    assert np.array_equal(grid.sweep_values, again.sweep_values)
    assert (tmp_path / "grid.f64.meta.json").exists()


def sample_catalogs():
    t1 = Transition(0, 3, 7.32, 1, 0.98, "q0r0t0", "q1r0t0")
    t2 = Transition(0, 5, 7.206, 2, 0.4, "q0r0t0", "q2r0t0")
    return [
        TransitionCatalog(sweep_value=40.0, transitions=(t2, t1)),
        TransitionCatalog(sweep_value=41.0, transitions=(t1,)),
    ]


class TestCatalogCsv:
    def test_round_trip_bytes_identical(self):
        cats = sample_catalogs()
        text = gridio.catalogs_to_csv(cats, {"axis": "piezo_v"})
        again = gridio.catalogs_from_csv(text)
        assert gridio.catalogs_to_csv(again, {"axis": "piezo_v"}) == text

    def test_columns(self):
        text = gridio.catalogs_to_csv(sample_catalogs())
        header = [l for l in text.splitlines() if not l.startswith("#")][0]
        assert header == "sweep_value,freq_GHz,n_photons,weight,from_label,to_label"

    def test_wrong_file_rejected(self):
        with pytest.raises(ValueError):
            gridio.catalogs_from_csv("a,b,c\n1,2,3\n")


def test_peaks_csv_round_trip():
    peaks = [
        PeakObservation(sweep_value=40.0, freq=7.32, amplitude=0.9, fwhm_mhz=3.5,
                        n_photons=1),
        PeakObservation(sweep_value=41.0, freq=7.20, amplitude=0.2, fwhm_mhz=2.0),
    ]
    text = gridio.peaks_to_csv(peaks)
    again = gridio.peaks_from_csv(text)
    assert again == peaks
    assert gridio.peaks_to_csv(again) == text


def test_bench_jsonl_round_trip():
    rows = [{"kind": "grid", "workers": 2, "cells_per_s": 1.5},
            {"kind": "determinism", "identical": True}]
    text = gridio.bench_to_jsonl(rows)
    assert gridio.bench_from_jsonl(text) == rows


def test_fit_report_text_format():
    class Result:
        best_values = {"g_x": 21.7, "V0": 40.0}
        uncertainties = {"g_x": 0.05, "V0": 0.01}
        loss = 1.2e-8
        residual_rms_mhz = 0.031
        residuals_mhz = np.array([0.01, -0.04])
        converged = True
        n_sentinel = 0
        n_starts = 1

    text = gridio.fit_report_text(Result)
    assert "g_x" in text and "21.7" in text
    assert "residual rms" in text
