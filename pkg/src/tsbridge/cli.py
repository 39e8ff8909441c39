"""Command-line surface wiring the pipeline end to end.

Every subcommand resolves its options (defaults, then an optional --config
JSON document, then explicit flags), writes the resolved document next to
its outputs as ``resolved_config.json``, and produces deterministic files:
re-running with the same resolved config and seed reproduces outputs byte
for byte. Config documents are schema-versioned and unknown keys are
rejected.

Exit codes: 0 ok, 2 configuration error, 3 data/schema error, 4 numerical
failure. The output directory may also be set through TSBRIDGE_OUT.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import calibration, evaluation, factors
from .errors import ConfigError, DataError, SchemaError, TsbridgeError
from .generator import (
    GeneratorConfig,
    fit_pipeline,
    generate_dataset,
    load_checkpoint,
    resume_pipeline,
    save_checkpoint,
)
from .series import (
    TimeGrid,
    TimeSeriesDataset,
    read_paths_csv,
    write_paths_csv,
    write_table_csv,
)
from .stochastic import (
    DEFAULT_HESTON_RANGES,
    HESTON_DIM_NAMES,
    RandomSource,
    heston_truth_rows,
    sample_heston_dataset,
)

CONFIG_SCHEMA_VERSION = 1


def _fail(exc: TsbridgeError):
    click.echo(f"error: {exc}", err=True)
    sys.exit(exc.exit_code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TsbridgeError as exc:
            _fail(exc)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(DataError.exit_code)

    return wrapper


def resolve_options(command: str, config_path, defaults: dict, flags: dict) -> dict:
    """defaults <- config file <- explicitly passed flags, unknown keys rejected."""
    resolved = dict(defaults)
    if config_path:
        try:
            with open(config_path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read config {config_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{config_path}: invalid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise SchemaError(f"{config_path}: config must be a JSON object")
        version = doc.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(
                f"config schema_version {version}, this build reads {CONFIG_SCHEMA_VERSION}"
            )
        doc_command = doc.pop("command", command)
        if doc_command != command:
            raise ConfigError(f"config is for command {doc_command!r}, not {command!r}")
        unknown = set(doc) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(doc)
    for key, value in flags.items():
        if value is not None:
            resolved[key] = value
    return resolved


def prepare_out_dir(out: str | None) -> Path:
    out = out or os.environ.get("TSBRIDGE_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_resolved(out_dir: Path, command: str, resolved: dict):
    doc = {"schema_version": CONFIG_SCHEMA_VERSION, "command": command}
    doc.update(resolved)
    with open(out_dir / "resolved_config.json", "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="JSON config document; flags override its values.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Random seed.")(fn)
    fn = click.option("--threads", type=int, default=None,
                      help="Parallelism hint (compute is in-process; outputs do not depend on it).")(fn)
    fn = click.option("--out", type=click.Path(), default=None,
                      help="Output directory (default: TSBRIDGE_OUT or cwd).")(fn)
    return fn


def _check_threads(threads: int):
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")


@click.group()
def main():
    """Bridge-diffusion time series generation, calibration, and evaluation."""


# ---------------------------------------------------------------------------


@main.command("simulate-heston")
@common_options
@click.option("--paths", "n_paths", type=int, default=None, help="Number of paths.")
@click.option("--length", type=int, default=None, help="Observation dates per path.")
@click.option("--dt", type=float, default=None, help="Real-time spacing between dates.")
@click.option("--x0", type=float, default=None, help="Initial price level.")
@click.option("--substeps", type=int, default=None,
              help="Euler substeps per observation interval.")
@handle_errors
def cmd_simulate_heston(config_path, seed, threads, out, n_paths, length, dt, x0, substeps):
    """Simulate a heterogeneous-parameter Heston dataset to CSV."""
    defaults = {
        "paths": 5000, "length": 252, "dt": 1.0 / 252, "x0": 1.0, "substeps": 1,
        "seed": 0, "out": None,
        "ranges": {k: list(v) for k, v in DEFAULT_HESTON_RANGES.items()},
    }
    resolved = resolve_options(
        "simulate-heston", config_path, defaults,
        {"paths": n_paths, "length": length, "dt": dt, "x0": x0,
         "substeps": substeps, "seed": seed, "out": out},
    )
    if threads is not None:
        _check_threads(threads)
    out_dir = prepare_out_dir(resolved["out"])
    ranges = {k: tuple(v) for k, v in resolved["ranges"].items()}
    dataset, truths = sample_heston_dataset(
        resolved["paths"], resolved["length"], resolved["dt"],
        RandomSource(resolved["seed"]), ranges=ranges,
        x0=resolved["x0"], substeps=resolved["substeps"],
    )
    write_paths_csv(out_dir / "paths.csv", dataset)
    write_table_csv(
        out_dir / "truth.csv",
        ["path_id", "kappa", "theta", "xi_vol", "rho", "r", "v0"],
        heston_truth_rows(truths),
    )
    write_resolved(out_dir, "simulate-heston", resolved)
    click.echo(f"wrote {dataset.n_paths} paths to {out_dir / 'paths.csv'}")


# ---------------------------------------------------------------------------


GENERATOR_KEYS = (
    "beta", "n_outer", "n_epoch", "batch_size", "lr", "d_model", "n_head",
    "ffn_ratio", "n_pi", "xi_frac", "sb_mode", "clamp_training_times",
    "reference_vol_noise",
)


@main.command("train")
@common_options
@click.option("--data", "data_path", type=click.Path(), default=None,
              help="Training paths CSV.")
@click.option("--sb-mode", "sb_mode", is_flag=True, flag_value=True, default=None,
              help="Drop the endpoint transport (drift-only baseline).")
@click.option("--beta", type=float, default=None, help="Transport strength.")
@click.option("--epochs", "n_epoch", type=int, default=None,
              help="Updates per outer iteration.")
@click.option("--outer", "n_outer", type=int, default=None, help="Outer iterations.")
@click.option("--d-model", type=int, default=None, help="Model width.")
@click.option("--n-head", type=int, default=None, help="Attention heads.")
@click.option("--batch-size", type=int, default=None, help="Paths per update.")
@click.option("--lr", type=float, default=None, help="Adam learning rate.")
@click.option("--horizon", type=float, default=None,
              help="Model-time horizon of the uniform training grid (default 1).")
@click.option("--resume", "resume_path", type=click.Path(), default=None,
              help="Continue training from a checkpoint (grids must match).")
@handle_errors
def cmd_train(config_path, seed, threads, out, data_path, sb_mode, beta, n_epoch,
              n_outer, d_model, n_head, batch_size, lr, horizon, resume_path):
    """Fit the generator on a paths CSV; write checkpoint and loss trace."""
    base = GeneratorConfig()
    defaults = {key: getattr(base, key) for key in GENERATOR_KEYS}
    defaults.update({"seed": 0, "horizon": 1.0, "data": None, "out": None})
    resolved = resolve_options(
        "train", config_path, defaults,
        {"sb_mode": sb_mode, "beta": beta, "n_epoch": n_epoch, "n_outer": n_outer,
         "d_model": d_model, "n_head": n_head, "batch_size": batch_size,
         "lr": lr, "seed": seed, "horizon": horizon, "data": data_path, "out": out},
    )
    if threads is not None:
        _check_threads(threads)
    if not resolved["data"]:
        raise ConfigError("no training data: pass --data or a config with a 'data' key")
    out_dir = prepare_out_dir(resolved["out"])
    config = GeneratorConfig.from_dict({k: resolved[k] for k in GENERATOR_KEYS})
    raw = read_paths_csv(resolved["data"])
    grid = TimeGrid.uniform(raw.grid.n_intervals, horizon=resolved["horizon"])
    dataset = TimeSeriesDataset(values=raw.values, grid=grid, dim_names=raw.dim_names)
    config.validate(dataset.grid)
    rng = RandomSource(resolved["seed"])
    if resume_path:
        fit = resume_pipeline(dataset, load_checkpoint(resume_path), rng, config=config)
    else:
        fit = fit_pipeline(dataset, config, rng)
    save_checkpoint(out_dir / "checkpoint.ckpt", fit.checkpoint)
    write_table_csv(
        out_dir / "loss_trace.csv",
        ["outer", "epoch", "loss"],
        [[o, e, float(l)] for o, e, l in fit.trace],
    )
    write_resolved(out_dir, "train", resolved)
    click.echo(f"wrote {out_dir / 'checkpoint.ckpt'}")


@main.command("generate")
@common_options
@click.option("--checkpoint", "ckpt_path", type=click.Path(), default=None)
@click.option("--paths", "n_paths", type=int, default=None, help="Paths to generate.")
@handle_errors
def cmd_generate(config_path, seed, threads, out, ckpt_path, n_paths):
    """Generate synthetic paths from a checkpoint, in data units."""
    resolved = resolve_options(
        "generate", config_path,
        {"paths": 5000, "seed": 0, "checkpoint": None, "out": None},
        {"paths": n_paths, "seed": seed, "checkpoint": ckpt_path, "out": out},
    )
    if threads is not None:
        _check_threads(threads)
    if not resolved["checkpoint"]:
        raise ConfigError("no checkpoint: pass --checkpoint or a config with a 'checkpoint' key")
    out_dir = prepare_out_dir(resolved["out"])
    ckpt = load_checkpoint(resolved["checkpoint"])
    dataset = generate_dataset(ckpt, resolved["paths"], RandomSource(resolved["seed"]))
    write_paths_csv(out_dir / "synthetic.csv", dataset)
    write_resolved(out_dir, "generate", resolved)
    click.echo(f"wrote {dataset.n_paths} paths to {out_dir / 'synthetic.csv'}")


# ---------------------------------------------------------------------------


def _read_heston_csv(path) -> np.ndarray:
    dataset = read_paths_csv(path)
    if dataset.dim_names != HESTON_DIM_NAMES:
        raise SchemaError(
            f"{path}: expected columns {HESTON_DIM_NAMES}, got {dataset.dim_names}"
        )
    return dataset.values


@main.command("heston-bench")
@common_options
@click.argument("real_csv", type=click.Path())
@click.argument("synth_csv", type=click.Path())
@click.argument("synth_sb_csv", type=click.Path())
@click.option("--dt", type=float, default=None, help="Observation spacing in years.")
@click.option("--bins", type=int, default=None, help="Histogram bins.")
@handle_errors
def cmd_heston_bench(config_path, seed, threads, out, real_csv, synth_csv,
                     synth_sb_csv, dt, bins):
    """Calibrate Heston parameters on real and generated sets; compare."""
    resolved = resolve_options(
        "heston-bench", config_path,
        {"dt": 1.0 / 252, "bins": 30, "seed": 0, "out": None},
        {"dt": dt, "bins": bins, "seed": seed, "out": out},
    )
    if threads is not None:
        _check_threads(threads)
    out_dir = prepare_out_dir(resolved["out"])
    sources = {
        "data": _read_heston_csv(real_csv),
        "sbbts": _read_heston_csv(synth_csv),
        "sb_mode": _read_heston_csv(synth_sb_csv),
    }
    if not sources["sbbts"].size or not sources["sb_mode"].size:
        raise DataError("empty synthetic dataset")
    results = {
        src: calibration.calibrate_dataset(values, resolved["dt"])
        for src, values in sources.items()
    }
    report = {
        "summaries": {src: res.summary() for src, res in results.items()},
        "dispersion": calibration.dispersion_comparison(results),
        "histograms": calibration.shared_histograms(results, bins=resolved["bins"]),
    }
    with open(out_dir / "calibration_report.json", "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    rows = []
    for src, res in results.items():
        for i, est in enumerate(res.estimates):
            rows.append([src, i] + [float(v) for v in est])
    write_table_csv(
        out_dir / "estimates.csv",
        ["source", "fit_id"] + calibration.PARAM_NAMES,
        rows,
    )
    hist_rows = []
    for name, payload in report["histograms"].items():
        edges = payload["edges"]
        for b in range(max(len(edges) - 1, 0)):
            row = [name, float(edges[b]), float(edges[b + 1])]
            row += [payload["counts"][src][b] for src in ("data", "sbbts", "sb_mode")]
            hist_rows.append(row)
    write_table_csv(
        out_dir / "histograms.csv",
        ["parameter", "lo", "hi", "count_data", "count_sbbts", "count_sb_mode"],
        hist_rows,
    )
    write_resolved(out_dir, "heston-bench", resolved)
    flag = report["dispersion"].get("sb_collapse_detected")
    click.echo(f"sb_collapse_detected: {flag}")


@main.command("eval")
@common_options
@click.argument("real_csv", type=click.Path())
@click.argument("synth_csv", type=click.Path())
@click.option("--max-lag", type=int, default=None, help="ACF lags.")
@handle_errors
def cmd_eval(config_path, seed, threads, out, real_csv, synth_csv, max_lag):
    """Statistical comparison of a synthetic dataset against real paths."""
    resolved = resolve_options(
        "eval", config_path, {"max_lag": 20, "seed": 0, "out": None},
        {"max_lag": max_lag, "seed": seed, "out": out},
    )
    if threads is not None:
        _check_threads(threads)
    out_dir = prepare_out_dir(resolved["out"])
    real = read_paths_csv(real_csv)
    synth = read_paths_csv(synth_csv)
    if real.dim != synth.dim:
        raise SchemaError(
            f"dimension mismatch: real d={real.dim}, synth d={synth.dim}"
        )
    report = evaluation.compare_datasets(real.values, synth.values,
                                         max_lag=resolved["max_lag"])
    with open(out_dir / "eval_report.json", "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    n_lags = len(report["acf_returns"]["real"])
    write_table_csv(
        out_dir / "acf.csv",
        ["lag", "real_returns", "synth_returns", "real_squared", "synth_squared"],
        [
            [lag,
             float(report["acf_returns"]["real"][lag]),
             float(report["acf_returns"]["synth"][lag]),
             float(report["acf_squared"]["real"][lag]),
             float(report["acf_squared"]["synth"][lag])]
            for lag in range(n_lags)
        ],
    )
    for src in ("real", "synth"):
        matrix = np.asarray(report["correlation"][src])
        write_table_csv(
            out_dir / f"correlation_{src}.csv",
            [f"c{j}" for j in range(matrix.shape[1])],
            [[float(v) for v in row] for row in matrix],
        )
    tail_rows = [
        [key, float(report["tail_risk"]["real"][key]),
         float(report["tail_risk"]["synth"][key]),
         float(report["tail_risk_gap"][key])]
        for key in report["tail_risk"]["real"]
    ]
    write_table_csv(out_dir / "tail_risk.csv", ["metric", "real", "synth", "gap"], tail_rows)
    hist = report["histogram"]
    write_table_csv(
        out_dir / "histogram.csv",
        ["lo", "hi", "count_real", "count_synth"],
        [
            [float(hist["edges"][b]), float(hist["edges"][b + 1]),
             hist["real"][b], hist["synth"][b]]
            for b in range(len(hist["real"]))
        ],
    )
    write_resolved(out_dir, "eval", resolved)
    click.echo(f"wrote {out_dir / 'eval_report.json'}")


# ---------------------------------------------------------------------------


def _read_returns_csv(path) -> tuple[np.ndarray, list[str]]:
    """Returns table: header of instrument ids, one numeric row per date."""
    import csv

    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise SchemaError(f"{path}: empty file")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no rows")
    return np.asarray(rows, dtype=np.float64), list(header)


@main.command("factor-fit")
@common_options
@click.argument("returns_csv", type=click.Path())
@click.option("--factors", "n_factors", type=int, default=None, help="PCA factors kept.")
@click.option("--clusters", "n_clusters", type=int, default=None, help="k-means clusters.")
@handle_errors
def cmd_factor_fit(config_path, seed, threads, out, returns_csv, n_factors, n_clusters):
    """Fit the PCA + k-means + residual-mixture factor model."""
    resolved = resolve_options(
        "factor-fit", config_path,
        {"factors": 16, "clusters": 3, "seed": 0, "out": None},
        {"factors": n_factors, "clusters": n_clusters, "seed": seed, "out": out},
    )
    if threads is not None:
        _check_threads(threads)
    out_dir = prepare_out_dir(resolved["out"])
    returns, names = _read_returns_csv(returns_csv)
    model = factors.fit_factor_model(
        returns, resolved["factors"], resolved["clusters"],
        RandomSource(resolved["seed"]).generator,
    )
    factors.save_factor_model(out_dir / "factor_model.bin", model, names)
    write_table_csv(
        out_dir / "factor_clusters.csv",
        ["factor", "cluster"],
        [[j, int(c)] for j, c in enumerate(model.factor_clusters)],
    )
    write_resolved(out_dir, "factor-fit", resolved)
    click.echo(f"wrote {out_dir / 'factor_model.bin'}")


@main.command("features")
@common_options
@click.argument("returns_csv", type=click.Path())
@click.option("--start", "t_start", type=int, default=None,
              help="First date index (default: the earliest feasible).")
@click.option("--end", "t_end", type=int, default=None,
              help="Last date index, inclusive (default: the final date).")
@handle_errors
def cmd_features(config_path, seed, threads, out, returns_csv, t_start, t_end):
    """Emit handcrafted per-instrument feature rows for a date range."""
    resolved = resolve_options(
        "features", config_path,
        {"start": None, "end": None, "seed": 0, "out": None},
        {"start": t_start, "end": t_end, "seed": seed, "out": out},
    )
    if threads is not None:
        _check_threads(threads)
    out_dir = prepare_out_dir(resolved["out"])
    returns, names = _read_returns_csv(returns_csv)
    max_h = max(max(factors.CUM_HORIZONS), max(factors.Z_HORIZONS))
    start = resolved["start"] if resolved["start"] is not None else max_h - 1
    end = resolved["end"] if resolved["end"] is not None else returns.shape[0] - 1
    if start > end:
        raise ConfigError(f"empty date range [{start}, {end}]")
    rows = []
    for t in range(start, end + 1):
        feats = factors.engineer_features(returns, t)
        for j, name in enumerate(names):
            rows.append([t, name] + [float(v) for v in feats[j]])
    write_table_csv(
        out_dir / "features.csv",
        ["date_index", "instrument"] + factors.feature_columns(),
        rows,
    )
    write_resolved(out_dir, "features", resolved)
    click.echo(f"wrote {len(rows)} feature rows")


@main.command("augment")
@common_options
@click.argument("returns_csv", type=click.Path())
@click.option("--mode", type=click.Choice(["noise", "generator"]), default=None,
              help="Augmentation source.")
@click.option("--copies", type=int, default=None, help="Copies per window (noise mode).")
@click.option("--lambda", "noise_scale", type=float, default=None,
              help="Noise scale relative to the window std.")
@click.option("--window", "window_length", type=int, default=None, help="Window length.")
@click.option("--model", "model_path", type=click.Path(), default=None,
              help="Factor model file (generator mode).")
@click.option("--checkpoint", "ckpt_path", type=click.Path(), default=None,
              help="Generator checkpoint on the factor panel (generator mode).")
@click.option("--paths", "n_paths", type=int, default=None,
              help="Windows to generate (generator mode).")
@handle_errors
def cmd_augment(config_path, seed, threads, out, returns_csv, mode, copies,
                noise_scale, window_length, model_path, ckpt_path, n_paths):
    """Emit augmented training windows with input/target splits."""
    resolved = resolve_options(
        "augment", config_path,
        {"mode": "noise", "copies": 1, "lambda": 0.5, "window": 253,
         "paths": 100, "seed": 0, "out": None},
        {"mode": mode, "copies": copies, "lambda": noise_scale,
         "window": window_length, "paths": n_paths, "seed": seed, "out": out},
    )
    if threads is not None:
        _check_threads(threads)
    out_dir = prepare_out_dir(resolved["out"])
    returns, names = _read_returns_csv(returns_csv)
    rng = RandomSource(resolved["seed"])

    if resolved["mode"] == "noise":
        windows = factors.sliding_windows(returns, length=resolved["window"])
        augmented = []
        for w, child in zip(windows, rng.spawn(windows.shape[0])):
            augmented.append(
                factors.noise_augment(w, resolved["copies"], child.generator,
                                      noise_scale=resolved["lambda"])
            )
        augmented = np.concatenate(augmented, axis=0)
    else:
        if not model_path or not ckpt_path:
            raise ConfigError("generator mode needs --model and --checkpoint")
        model, _ = factors.load_factor_model(model_path)
        ckpt = load_checkpoint(ckpt_path)
        if ckpt.net.dim != model.n_factors:
            raise ConfigError(
                f"checkpoint dimension {ckpt.net.dim} != model factors {model.n_factors}"
            )
        if ckpt.grid.dates.size != resolved["window"]:
            raise ConfigError(
                f"checkpoint grid has {ckpt.grid.dates.size} dates, window is "
                f"{resolved['window']}"
            )
        gen_rng, resid_rng = rng.spawn(2)
        factor_windows = generate_dataset(ckpt, resolved["paths"], gen_rng).values
        augmented = np.empty((resolved["paths"], resolved["window"], returns.shape[1]))
        for i in range(resolved["paths"]):
            resid = factors.sample_residuals(model, resolved["window"], resid_rng.generator)
            augmented[i] = factors.reconstruct(factor_windows[i], model, resid)

    inputs_rows = []
    target_rows = []
    for w_id, window in enumerate(augmented):
        inputs, labels = factors.split_target(window)
        for t_idx, row in enumerate(inputs):
            inputs_rows.append([w_id, t_idx] + [float(v) for v in row])
        target_rows.append([w_id] + [int(v) for v in labels])
    write_table_csv(out_dir / "augmented_inputs.csv",
                    ["window_id", "row"] + names, inputs_rows)
    write_table_csv(out_dir / "augmented_targets.csv",
                    ["window_id"] + names, target_rows)
    write_resolved(out_dir, "augment", resolved)
    click.echo(f"wrote {len(augmented)} windows")


if __name__ == "__main__":
    main()
