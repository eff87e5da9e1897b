"""Command-line client for the qtrsim service.

Subcommands mirror the service endpoints (spectrum, drive-sim, fit,
analytics, locate-failure, bench) plus `serve` to start the HTTP
service. By default requests are executed in-process through the same
handlers the service uses; with ``--server URL`` (or QTRSIM_SERVER) the
CLI sends them to a running instance instead and only handles file I/O
locally.

Configuration precedence is CLI flag > config file (``--config``, same
``key = value`` syntax as parameter files, keys named after the long
options) > built-in default; every artifact carries a metadata header
echoing the resolved configuration.

Exit codes: 0 success, 1 configuration error (the message names the
offending key), 2 numerical failure, 3 grid completed with NaN cells.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, analytics as _analytics, fitting, gridio, model
from .dynamics import NumericalAccuracyError, SpectroscopyGrid, StiffProblemError
from .parallel import WORKERS_ENV
from .spectrum import NoCrossingError, Transition, TransitionCatalog
from .service import schemas

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_PARTIAL = 3

_HTTP_TIMEOUT = 3600.0


class RemoteConfigError(Exception):
    """400 from the service: the request configuration was rejected."""


def _dispatch(ctx, path: str, request, response_model):
    server = ctx.obj.get("server")
    if server:
        import httpx

        resp = httpx.post(server.rstrip("/") + path,
                          json=request.model_dump(mode="json"),
                          timeout=_HTTP_TIMEOUT)
        if resp.status_code in (400, 422):
            raise RemoteConfigError(resp.text)
        resp.raise_for_status()
        return response_model.model_validate(resp.json())
    from .service import ops

    handlers = {
        "/analytics": ops.run_analytics,
        "/spectrum": ops.run_spectrum,
        "/grid": ops.run_grid,
        "/line-scan": ops.run_line_scan,
        "/fit": ops.run_fit,
        "/locate-failure": ops.run_locate_failure,
        "/bench": ops.run_bench,
    }
    return handlers[path](request)


def _execute(body):
    """Run a command body and translate domain errors into exit codes."""
    try:
        code = body()
    except (model.ParamFileError, model.ParamError, RemoteConfigError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (StiffProblemError, NumericalAccuracyError, NoCrossingError,
            np.linalg.LinAlgError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)
    sys.exit(code or EXIT_OK)


def _params_mapping(params_path: str | None) -> tuple[dict[str, float], str]:
    if params_path is None or params_path == "builtin:table1":
        from importlib.resources import files

        text = files("qtrsim.data").joinpath("table1.params").read_text(encoding="utf-8")
        source = "builtin:table1"
    else:
        text = Path(params_path).read_text(encoding="utf-8")
        source = params_path
    return model.params_to_mapping(model.parse_params(text)), source


def _coerce(raw: str):
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


def _parse_config_file(path: str) -> dict:
    cfg: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise model.ParamFileError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        cfg[key.strip().replace("-", "_")] = _coerce(val.strip())
    return cfg


def _meta(ctx, command: str, source: str, **options) -> dict:
    out = {"generator": f"qtrsim {__version__}", "command": command,
           "params_source": source}
    if ctx.obj.get("server"):
        out["server"] = ctx.obj["server"]
    for key in sorted(options):
        out[key] = options[key]
    return out


def _parse_kv_floats(text: str, what: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise click.UsageError(f"bad {what} entry {item!r}; expected name=value")
        key, _, val = item.partition("=")
        out[key.strip()] = float(val)
    return out


def _parse_bounds(text: str) -> dict[str, tuple[float, float]]:
    out: dict[str, tuple[float, float]] = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item or ":" not in item:
            raise click.UsageError(f"bad bounds entry {item!r}; expected name=lo:hi")
        key, _, rng = item.partition("=")
        lo, _, hi = rng.partition(":")
        out[key.strip()] = (float(lo), float(hi))
    return out


@click.group()
@click.version_option(version=__version__, prog_name="qtrsim")
@click.option("--server", envvar="QTRSIM_SERVER", default=None,
              help="Base URL of a running qtrsim service; default is in-process.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Run-config file (key = value); flags override its entries.")
@click.pass_context
def main(ctx, server, config_path):
    """Spectroscopy simulator and fitting toolchain for the
    qubit / readout-resonator / TLS-defect system."""
    ctx.obj = {"server": server}
    if config_path:
        cfg = _parse_config_file(config_path)
        ctx.default_map = {cmd: cfg for cmd in
                           ("analytics", "spectrum", "drive-sim", "fit",
                            "locate-failure", "bench")}


_params_opt = click.option(
    "--params", "params_path", default=None,
    help="Parameter file (key = value); default is the built-in table1 set.")


@main.command()
@_params_opt
@click.option("--out", type=click.Path(), default=None, help="Optional CSV output.")
@click.pass_context
def analytics(ctx, params_path, out):
    """Print the closed-form characterization quantities."""

    def body():
        mapping, source = _params_mapping(params_path)
        resp = _dispatch(ctx, "/analytics",
                         schemas.AnalyticsRequest(params=mapping),
                         schemas.AnalyticsResponse)
        rows = [
            ("f_q [GHz]", resp.f_q_ghz),
            ("f_res [GHz]", resp.f_res_ghz),
            ("f_TLS [GHz]", resp.f_tls_ghz),
            ("delta_qr [MHz]", resp.delta_qr_mhz),
            ("delta_qTLS [MHz]", resp.delta_qt_mhz),
            ("chi [MHz]", resp.chi_mhz),
            ("g_eff [MHz]", resp.g_eff_mhz),
            ("V_rms [V]", resp.v_rms_v),
            ("|F| [V/m]", resp.field_v_per_m),
            ("p_bar [e*A]", resp.p_bar_ea),
            ("C_tot [fF]", resp.c_tot_ff),
            ("E_c [GHz]", resp.e_c_ghz),
        ]
        width = max(len(k) for k, _ in rows)
        for key, value in rows:
            click.echo(f"{key:<{width}}  {value:.6g}")
        if resp.readout_failure_v:
            volts = ", ".join(f"{v:.4f}" for v in resp.readout_failure_v)
            click.echo(f"{'readout failure at [V]':<{width}}  {volts}")
        else:
            click.echo(f"{'readout failure at [V]':<{width}}  none (f_res < delta0)")
        click.echo("\nTLS-limited T1 estimate by unit convention:")
        for row in resp.t1_study:
            t1s = ", ".join(f"T1(delta={k} MHz) = {v:.3g} us"
                            for k, v in row.t1_us.items())
            mark = "reproduces published range" if row.reproduces_published_range else "-"
            click.echo(f"  {row.convention:<18} {t1s}   [{mark}]")
        for w in resp.warnings:
            click.echo(f"warning [{w.code}]: {w.message}", err=True)
        if out:
            lines = [gridio.render_metadata(_meta(ctx, "analytics", source)).rstrip("\n")]
            lines.append("quantity,value")
            lines += [f"{k},{v!r}" for k, v in rows]
            Path(out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        return EXIT_OK

    _execute(body)


@main.command("locate-failure")
@_params_opt
@click.pass_context
def locate_failure(ctx, params_path):
    """Piezo voltages where the TLS crosses the readout resonator."""

    def body():
        mapping, _ = _params_mapping(params_path)
        resp = _dispatch(ctx, "/locate-failure",
                         schemas.LocateFailureRequest(params=mapping),
                         schemas.LocateFailureResponse)
        if not resp.voltages:
            click.echo(f"no failure point: f_res = {resp.f_res_ghz} GHz is below "
                       f"the TLS floor delta0 = {resp.delta0_ghz} GHz")
        else:
            for v in resp.voltages:
                click.echo(f"readout failure branch at piezo V = {v:.4f}")
        return EXIT_OK

    _execute(body)


@main.command()
@_params_opt
@click.option("--axis", type=click.Choice(["piezo_v", "flux"]), default="piezo_v")
@click.option("--sweep-start", type=float, required=True)
@click.option("--sweep-stop", type=float, required=True)
@click.option("--sweep-points", type=int, default=81, show_default=True)
@click.option("--f-start", type=float, required=True, help="Window start [GHz].")
@click.option("--f-stop", type=float, required=True, help="Window stop [GHz].")
@click.option("--max-photons", type=int, default=3, show_default=True)
@click.option("--all-initial", is_flag=True,
              help="Catalog transitions from every eigenstate, not only the ground state.")
@click.option("--weight-floor", type=float, default=1e-3, show_default=True,
              help="Drop lines below this fraction of the strongest 1-photon element.")
@click.option("--workers", type=int, default=None,
              help=f"Worker processes (default: ${WORKERS_ENV} or 1).")
@click.option("-o", "--out", type=click.Path(), required=True, help="Catalog CSV path.")
@click.option("--png", type=click.Path(), default=None, help="Optional line-map PNG.")
@click.pass_context
def spectrum(ctx, params_path, axis, sweep_start, sweep_stop, sweep_points,
             f_start, f_stop, max_photons, all_initial, weight_floor, workers,
             out, png):
    """Eigenvalue transition map over a strain or flux sweep."""

    def body():
        mapping, source = _params_mapping(params_path)
        req = schemas.SpectrumRequest(
            params=mapping, axis=axis,
            sweep=schemas.AxisSpec(start=sweep_start, stop=sweep_stop, points=sweep_points),
            f_start=f_start, f_stop=f_stop, max_photons=max_photons,
            ground_only=not all_initial, weight_floor=weight_floor, workers=workers,
        )
        resp = _dispatch(ctx, "/spectrum", req, schemas.SpectrumResponse)
        catalogs = _catalogs_from_rows(resp.rows)
        meta = _meta(ctx, "spectrum", source, axis=axis,
                     sweep=f"{sweep_start!r}:{sweep_stop!r}:{sweep_points}",
                     f_window=f"{f_start!r}:{f_stop!r}", max_photons=max_photons,
                     ground_only=not all_initial, weight_floor=repr(weight_floor))
        meta.update(resp.metadata)
        Path(out).write_text(gridio.catalogs_to_csv(catalogs, meta), encoding="utf-8")
        click.echo(f"wrote {sum(len(c.transitions) for c in catalogs)} transitions "
                   f"at {len(catalogs)} sweep points to {out}")
        if png:
            _render_catalog_png(catalogs, png, axis)
        return EXIT_OK

    _execute(body)


def _catalogs_from_rows(rows) -> list[TransitionCatalog]:
    groups: dict[float, list[Transition]] = {}
    order: list[float] = []
    for r in rows:
        if r.sweep_value not in groups:
            groups[r.sweep_value] = []
            order.append(r.sweep_value)
        groups[r.sweep_value].append(Transition(
            from_idx=-1, to_idx=-1, freq=r.freq_ghz, n_photons=r.n_photons,
            weight=r.weight, from_label=r.from_label, to_label=r.to_label))
    return [TransitionCatalog(sweep_value=s, transitions=tuple(groups[s])) for s in order]


@main.command("drive-sim")
@_params_opt
@click.option("--sweep-start", type=float, required=True, help="Piezo start [V].")
@click.option("--sweep-stop", type=float, required=True, help="Piezo stop [V].")
@click.option("--sweep-points", type=int, default=11, show_default=True)
@click.option("--f-start", type=float, required=True, help="Drive start [GHz].")
@click.option("--f-stop", type=float, required=True, help="Drive stop [GHz].")
@click.option("--f-points", type=int, default=11, show_default=True)
@click.option("--amplitude", type=float, required=True, help="Drive amplitude [MHz].")
@click.option("--t-max", type=float, default=20.0, show_default=True)
@click.option("--window", type=float, default=2.0, show_default=True)
@click.option("--epsilon", type=float, default=1e-3, show_default=True)
@click.option("--method", type=click.Choice(["rk45", "bdf", "expm", "auto"]), default="auto",
              show_default=True)
@click.option("--workers", type=int, default=None,
              help=f"Worker processes (default: ${WORKERS_ENV} or 1).")
@click.option("-o", "--out", type=click.Path(), required=True, help="Grid CSV path.")
@click.option("--binary", is_flag=True, help="Also write raw float64 matrix + sidecar.")
@click.option("--png", type=click.Path(), default=None, help="Optional heatmap PNG.")
@click.pass_context
def drive_sim(ctx, params_path, sweep_start, sweep_stop, sweep_points,
              f_start, f_stop, f_points, amplitude, t_max, window, epsilon,
              method, workers, out, binary, png):
    """Driven steady-state spectroscopy grid (Lindblad evolution per cell)."""

    def body():
        mapping, source = _params_mapping(params_path)
        req = schemas.GridRequest(
            params=mapping,
            sweep=schemas.AxisSpec(start=sweep_start, stop=sweep_stop, points=sweep_points),
            freq=schemas.AxisSpec(start=f_start, stop=f_stop, points=f_points),
            amplitude_mhz=amplitude, t_max=t_max, window=window, epsilon=epsilon,
            method=method, workers=workers,
        )
        resp = _dispatch(ctx, "/grid", req, schemas.GridResponse)
        values = np.array([[math.nan if v is None else v for v in row]
                           for row in resp.values])
        grid = SpectroscopyGrid(
            sweep_values=np.array(resp.sweep_values),
            freq_values=np.array(resp.freq_values),
            values=values,
            metadata=dict(resp.metadata),
        )
        meta = _meta(ctx, "drive-sim", source,
                     sweep=f"{sweep_start!r}:{sweep_stop!r}:{sweep_points}",
                     freq=f"{f_start!r}:{f_stop!r}:{f_points}",
                     amplitude_mhz=repr(amplitude), method=method)
        Path(out).write_text(gridio.grid_to_csv(grid, meta), encoding="utf-8")
        if binary:
            gridio.grid_to_binary(grid, str(out) + ".f64", meta)
        nan_cells = int(np.isnan(values).sum())
        click.echo(f"wrote {values.shape[0]}x{values.shape[1]} grid to {out}"
                   f" ({nan_cells} NaN cells)")
        if png:
            _render_grid_png(grid, png)
        return EXIT_PARTIAL if nan_cells else EXIT_OK

    _execute(body)


@main.command()
@_params_opt
@click.option("--grid", "grid_path", type=click.Path(exists=True), default=None,
              help="Spectroscopy-grid CSV to extract peaks from.")
@click.option("--peaks", "peaks_path", type=click.Path(exists=True), default=None,
              help="Peak-observation CSV (sweep_value,freq_GHz,amplitude,fwhm_MHz,n_photons).")
@click.option("--free", required=True,
              help="Comma-separated free parameters, e.g. 'delta0,gamma,V0,g_x'.")
@click.option("--bounds", "bounds_text", required=True,
              help="Bounds per free parameter, e.g. 'delta0=5.5:6.2,g_x=10:35'.")
@click.option("--seed", "seed_text", required=True,
              help="Seed values, e.g. 'delta0=5.9,g_x=20'.")
@click.option("--f-start", type=float, required=True)
@click.option("--f-stop", type=float, required=True)
@click.option("--max-photons", type=int, default=3, show_default=True)
@click.option("--prominence", type=float, default=0.1, show_default=True,
              help="Peak threshold relative to the column maximum (grid input).")
@click.option("--smooth", type=int, default=0, help="Smoothing width in bins (grid input).")
@click.option("--multistart", type=int, default=0, show_default=True)
@click.option("--rng-seed", type=int, default=0, show_default=True)
@click.option("--amplitude-weighting", is_flag=True,
              help="Weight peaks by signal amplitude instead of uniformly.")
@click.option("-o", "--out", "out_prefix", type=click.Path(), required=True,
              help="Output prefix: writes <prefix>.report.txt, .residuals.csv, .params.")
@click.pass_context
def fit(ctx, params_path, grid_path, peaks_path, free, bounds_text, seed_text,
        f_start, f_stop, max_photons, prominence, smooth, multistart, rng_seed,
        amplitude_weighting, out_prefix):
    """Fit model parameters to observed peak positions."""

    def body():
        if (grid_path is None) == (peaks_path is None):
            raise click.UsageError("provide exactly one of --grid or --peaks")
        mapping, source = _params_mapping(params_path)
        if peaks_path:
            observations = gridio.peaks_from_csv(
                Path(peaks_path).read_text(encoding="utf-8"))
        else:
            grid = gridio.grid_from_csv(Path(grid_path).read_text(encoding="utf-8"))
            observations = fitting.extract_peaks(grid, prominence=prominence,
                                                 smooth_width=smooth)
        if not observations:
            raise click.UsageError("no peak observations found")
        req = schemas.FitRequest(
            params=mapping,
            observations=[schemas.PeakIn(
                sweep_value=o.sweep_value, freq_ghz=o.freq, amplitude=o.amplitude,
                fwhm_mhz=o.fwhm_mhz, n_photons=o.n_photons) for o in observations],
            free=[s.strip() for s in free.split(",") if s.strip()],
            bounds=_parse_bounds(bounds_text),
            seed=_parse_kv_floats(seed_text, "seed"),
            f_start=f_start, f_stop=f_stop, max_photons=max_photons,
            multistart=multistart, rng_seed=rng_seed,
            amplitude_weighting=amplitude_weighting,
        )
        resp = _dispatch(ctx, "/fit", req, schemas.FitResponse)

        class _Shim:
            best_values = resp.best
            uncertainties = resp.uncertainties
            loss = resp.loss
            residual_rms_mhz = resp.residual_rms_mhz
            residuals_mhz = np.array(resp.residuals_mhz)
            converged = resp.converged
            n_sentinel = resp.n_sentinel
            n_starts = resp.n_starts

        report = gridio.fit_report_text(_Shim)
        Path(f"{out_prefix}.report.txt").write_text(report, encoding="utf-8")
        Path(f"{out_prefix}.residuals.csv").write_text(
            gridio.residuals_to_csv(_Shim, observations), encoding="utf-8")
        Path(f"{out_prefix}.params").write_text(resp.params_text, encoding="utf-8")
        click.echo(report)
        click.echo(f"best-fit parameter file: {out_prefix}.params")
        return EXIT_OK if resp.converged else EXIT_NUMERIC

    _execute(body)


@main.command()
@_params_opt
@click.option("--dims", default="2,2;4,4;6,6", show_default=True,
              help="Semicolon-separated qubit,resonator level pairs.")
@click.option("--workers", default="1,2", show_default=True,
              help="Comma-separated worker counts.")
@click.option("--cells", type=int, default=8, show_default=True)
@click.option("--t-max", type=float, default=2.0, show_default=True)
@click.option("--amplitude", type=float, default=2.0, show_default=True)
@click.option("-o", "--out", type=click.Path(), default=None, help="JSON-lines output.")
@click.pass_context
def bench(ctx, params_path, dims, workers, cells, t_max, amplitude, out):
    """Throughput benchmark of the driven-spectroscopy engine."""

    def body():
        mapping, _ = _params_mapping(params_path)
        dim_pairs = []
        for pair in filter(None, (s.strip() for s in dims.split(";"))):
            a, _, b = pair.partition(",")
            dim_pairs.append((int(a), int(b)))
        req = schemas.BenchRequest(
            params=mapping, dims=dim_pairs,
            workers=[int(w) for w in workers.split(",") if w.strip()],
            cells=cells, t_max=t_max, amplitude_mhz=amplitude,
        )
        resp = _dispatch(ctx, "/bench", req, schemas.BenchResponse)
        text = gridio.bench_to_jsonl(resp.rows)
        if out:
            Path(out).write_text(text, encoding="utf-8")
        click.echo(text.rstrip("\n"))
        return EXIT_OK

    _execute(body)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=host, port=port)


def _render_grid_png(grid: SpectroscopyGrid, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 5))
    mesh = ax.pcolormesh(grid.sweep_values, grid.freq_values, grid.values.T,
                         shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="qubit excitation 1 - P(|0>)")
    ax.set_xlabel("piezo voltage [V]")
    ax.set_ylabel("drive frequency [GHz]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_catalog_png(catalogs, path: str, axis: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 5))
    colors = {1: "tab:blue", 2: "tab:red", 3: "tab:green"}
    for cat in catalogs:
        for t in cat.transitions:
            ax.plot(cat.sweep_value, t.freq, ".", ms=2,
                    color=colors.get(t.n_photons, "tab:gray"))
    ax.set_xlabel("piezo voltage [V]" if axis == "piezo_v" else "flux [Phi_0]")
    ax.set_ylabel("transition frequency [GHz]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


if __name__ == "__main__":
    main()
