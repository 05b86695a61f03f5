"""Command-line runner: scenario orchestration and file output.

Modes
  windows    analytic modulation-strength windows -> windows.csv
  convert    lab-parameter scaling -> dimensionless.csv
  classical  trajectory-ensemble run -> series.csv + final marginals
  quantum    split-operator run -> series.csv, marginals, optional raster
  sweep      quantum runs over kbar values -> per-cell dirs + summary.csv

Every run writes a manifest (the resolved config plus a meta section) that
reproduces the run bit-for-bit when fed back through --config.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .classical import InitialDescriptor, evolve_ensemble, sample_initial
from .config import RunConfig, default_config_text, parse_config, render_config
from .errors import ConfigError, exit_code_for
from .model import acceleration_window, branch_indices, localization_window, overlap_window
from .observables import ObservableSeries, Raster, momentum_marginal, position_marginal, saturation_metric
from .quantum import GridState, Recorder, init_gaussian, propagate


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def write_series_csv(path: Path, series: ObservableSeries) -> None:
    header = ["time"] + series.names
    cols = [series.times] + [series.columns[name] for name in series.names]
    write_csv(path, header, zip(*cols))


def write_marginal_csv(path: Path, marginal) -> None:
    axis = "p" if marginal.axis == "momentum" else "z"
    write_csv(path, [axis, "density"], zip(marginal.bin_centers, marginal.density))


def write_manifest(path: Path, config: RunConfig) -> None:
    meta = {"package_version": __version__, "format_version": "1"}
    path.write_text(render_config(config, meta))


def write_pgm(path: Path, raster: Raster) -> None:
    """16-bit big-endian P5; rows run from z_max down to z_min, columns in time."""
    vmax = float(raster.values.max())
    scale = 65535.0 / vmax if vmax > 0 else 0.0
    img = np.rint(raster.values[::-1, :] * scale).astype(">u2")
    header = (
        f"P5\n# t [{_fmt(raster.t_axis[0])}, {_fmt(raster.t_axis[-1])}]"
        f" z [{_fmt(raster.z_axis[0])}, {_fmt(raster.z_axis[-1])}] vmax {_fmt(vmax)}\n"
        f"{img.shape[1]} {img.shape[0]}\n65535\n"
    )
    path.write_bytes(header.encode("ascii") + img.tobytes())


def write_axes_csv(path: Path, raster: Raster) -> None:
    rows = [("t", i, v) for i, v in enumerate(raster.t_axis)]
    rows += [("z", i, v) for i, v in enumerate(raster.z_axis)]
    write_csv(path, ["axis", "index", "value"], rows)


def write_plot_script(path: Path, series_names: list[str], have_raster: bool) -> None:
    var_col = series_names.index("var_p") + 2
    lines = [
        "set datafile separator comma",
        "set key autotitle columnhead",
        "set terminal pngcairo size 1000,700",
        "set output 'variance.png'",
        "set xlabel 'time'",
        "set ylabel 'momentum variance'",
        f"plot 'series.csv' using 1:{var_col} with lines",
        "set output 'marginal_p.png'",
        "set xlabel 'p'",
        "set ylabel 'density'",
        "set logscale y",
        "plot 'marginal_p.csv' using 1:2 with lines",
        "unset logscale y",
        "set output 'marginal_z.png'",
        "set xlabel 'z'",
        "plot 'marginal_z.csv' using 1:2 with lines",
    ]
    if have_raster:
        lines.append("# space-time density: raster.pgm (axes in raster_axes.csv)")
    path.write_text("\n".join(lines) + "\n")


def _run_windows(config: RunConfig, out: Path) -> None:
    kbar = config.params.kbar
    rows: list[tuple] = []
    loc = localization_window(kbar)
    rows.append((loc.kind.value, "", loc.lo, loc.hi))
    for s in branch_indices(config.windows_s_max):
        acc = acceleration_window(s)
        rows.append((acc.kind.value, s, acc.lo, acc.hi))
        ovl = overlap_window(kbar, s)
        rows.append((ovl.kind.value, s, ovl.lo, ovl.hi))
    write_csv(out / "windows.csv", ["kind", "s", "lo", "hi"], rows)


def _run_convert(config: RunConfig, out: Path) -> None:
    p = config.params
    write_csv(out / "dimensionless.csv", ["lambda", "kappa", "v0", "kbar"],
              [(p.lam, p.kappa, p.v0, p.kbar)])


def _ensemble_marginal_csvs(out: Path, ensemble, bins: int = 256) -> None:
    for name, values in (("marginal_z.csv", ensemble.z), ("marginal_p.csv", ensemble.p)):
        counts, edges = np.histogram(values, bins=bins, density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])
        axis = "z" if name == "marginal_z.csv" else "p"
        write_csv(out / name, [axis, "density"], zip(centers, counts))


def _run_classical(config: RunConfig, out: Path) -> ObservableSeries:
    sc = config.scenario
    descriptor = InitialDescriptor(z0=sc.z0, p0=sc.p0, dz=sc.dz, dp=sc.dp, shape=sc.shape)
    ensemble = sample_initial(descriptor, sc.n_points, config.seed, t0=sc.t0,
                              lam=config.params.lam)
    if sc.t_final > sc.t0:
        ensemble, series = evolve_ensemble(ensemble, config.params, config.classical_cfg,
                                           sc.t_final, sc.record_every)
    else:
        ok = np.isfinite(ensemble.p)
        series = ObservableSeries(times=np.array([sc.t0]), columns={
            "mean_z": np.array([ensemble.z.mean()]),
            "mean_p": np.array([ensemble.p.mean()]),
            "mean_p2": np.array([(ensemble.p**2).mean()]),
            "var_p": np.array([ensemble.p.var()]),
            "fail_frac": np.array([1.0 - ok.mean()]),
        })
    write_series_csv(out / "series.csv", series)
    _ensemble_marginal_csvs(out, ensemble)
    if config.output.plot_script:
        write_plot_script(out / "plot.gp", series.names, have_raster=False)
    return series


def _quantum_state(config: RunConfig) -> GridState:
    sc = config.scenario
    return init_gaussian(config.grid, sc.z0, sc.p0, sc.dz, config.params, t0=sc.t0)


def _run_quantum(config: RunConfig, out: Path) -> ObservableSeries:
    sc = config.scenario
    state = _quantum_state(config)
    recorder = Recorder(
        record_every=sc.record_every,
        snapshot_every=sc.snapshot_every if sc.snapshot_every > 0 else None,
        snapshot_downsample=sc.snapshot_downsample,
    )
    final, series = propagate(state, config.quantum_cfg, sc.t_final, recorder)
    write_series_csv(out / "series.csv", series)
    write_marginal_csv(out / "marginal_p.csv", momentum_marginal(final))
    write_marginal_csv(out / "marginal_z.csv", position_marginal(final))
    have_raster = bool(recorder.snapshot_times) and config.output.raster
    if have_raster:
        raster = recorder.raster()
        write_pgm(out / "raster.pgm", raster)
        write_axes_csv(out / "raster_axes.csv", raster)
    if config.output.plot_script:
        write_plot_script(out / "plot.gp", series.names, have_raster)
    return series


def _cell_config(config: RunConfig, kbar: float, cell_dir: str) -> RunConfig:
    params = dataclasses.replace(config.params, kbar=kbar)
    scenario = config.scenario
    if "scenario.dz" not in config.provided:
        dz = math.sqrt(kbar / 2.0)
        dp = kbar / (2.0 * dz) if "scenario.dp" not in config.provided else scenario.dp
        scenario = dataclasses.replace(scenario, dz=dz, dp=dp)
    output = dataclasses.replace(config.output, dir=cell_dir)
    return dataclasses.replace(config, mode="quantum", params=params, scenario=scenario,
                               output=output)


def _sweep_cell(cell: RunConfig) -> tuple[float, float, float, float]:
    out = Path(cell.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.cfg", cell)
    series = _run_quantum(cell, out)
    metric = saturation_metric(series, "var_p")
    return cell.params.kbar, metric.slope_early, metric.slope_late, metric.ratio


def _run_sweep(config: RunConfig, out: Path) -> None:
    cells = [
        _cell_config(config, kbar, str(out / f"kbar={_fmt(kbar)}"))
        for kbar in config.sweep_values
    ]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(cell) for cell in cells]
    results.sort(key=lambda row: row[0])
    write_csv(out / "summary.csv",
              ["kbar", "slope_early", "slope_late", "saturation_ratio"], results)


def run(config: RunConfig) -> Path:
    """Execute the configured mode; returns the output directory."""
    out = Path(config.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.cfg", config)
    if config.mode == "windows":
        _run_windows(config, out)
    elif config.mode == "convert":
        _run_convert(config, out)
    elif config.mode == "classical":
        _run_classical(config, out)
    elif config.mode == "quantum":
        _run_quantum(config, out)
    elif config.mode == "sweep":
        _run_sweep(config, out)
    else:
        raise ConfigError(f"unknown mode {config.mode!r}")
    return out


def _write_error_record(out_dir: str | None, exc: BaseException, code: int) -> None:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    try:
        if out_dir:
            path = Path(out_dir)
            path.mkdir(parents=True, exist_ok=True)
            (path / "error.json").write_text(json.dumps(record, indent=2) + "\n")
    except OSError:
        pass
    print(json.dumps(record), file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fermi-bullet",
        description="Fermi-accelerated, dynamically localized matter waves on a modulated mirror",
    )
    parser.add_argument("mode", nargs="?", choices=("windows", "convert", "classical",
                                                    "quantum", "sweep"))
    parser.add_argument("--config", help="path to the run configuration")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--threads", type=int, help="sweep worker count override")
    parser.add_argument("--print-defaults", action="store_true",
                        help="emit a fully commented default config and exit")
    args = parser.parse_args(argv)

    if args.print_defaults:
        print(default_config_text())
        return 0

    out_dir = args.out
    try:
        if not args.config:
            raise ConfigError("--config is required (or use --print-defaults)")
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
        config = parse_config(text)
        if args.mode:
            if "run.mode" in config.provided and config.mode != args.mode:
                raise ConfigError(
                    f"config sets run.mode = {config.mode} but the command line says {args.mode}")
            config.mode = args.mode
        elif "run.mode" not in config.provided:
            raise ConfigError("specify a mode on the command line or set run.mode")
        if args.seed is not None:
            config.seed = args.seed
        if args.threads is not None:
            config.threads = args.threads
        if args.out:
            config.output = dataclasses.replace(config.output, dir=args.out)
        out_dir = config.output.dir
        run(config)
        return 0
    except Exception as exc:  # noqa: BLE001 - single funnel to exit codes
        code = exit_code_for(exc)
        _write_error_record(out_dir, exc, code)
        return code


if __name__ == "__main__":
    sys.exit(main())
