"""Command-line entry point: generate, train, sweep, analyze, plot.

Exit codes: 0 success, 2 invalid configuration or input, 3 I/O error
(missing or unwritable paths), 4 numerical divergence.
"""
import argparse
import csv
import json
import logging
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .analysis import AnalysisError
from .config import ConfigError, PipelineConfig, dump_config, load_config
from .lorenz import Dataset, IntegrationError, generate_dataset
from .readout import TrainingDivergence, mse_loss, forward, train
from .reservoir import ReservoirDivergence, build
from .sweep import astrocyte_count, default_jobs, read_records, run_sweep, write_records

log = logging.getLogger("astrolsm")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGED = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _resolve(args):
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out = str(args.out)
    if getattr(args, "dataset", None):
        cfg.dataset = str(args.dataset)
    if getattr(args, "jobs", None) is not None:
        cfg.sweep = replace(cfg.sweep, jobs=args.jobs)
    return cfg


def _prepare_out(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"cannot write to output directory {path}: {exc}", EXIT_IO) from exc
    return path


def _manifest_path(path):
    path = Path(path)
    if path.is_dir():
        path = path / "dataset.json"
    path = path.with_suffix(".json")
    if not path.exists():
        raise CliError(f"dataset manifest not found: expected {path}", EXIT_IO)
    return path


def _make_dataset(cfg: PipelineConfig):
    lz = cfg.lorenz
    return generate_dataset(seed=cfg.seed, n_trajectories=lz.n_trajectories,
                            windows_per_trajectory=lz.windows_per_trajectory, dt=lz.dt,
                            transient_steps=lz.transient_steps, init_range=lz.init_range,
                            split_fractions=lz.split)


def _load_or_make_dataset(cfg, out):
    if cfg.dataset:
        return Dataset.load(_manifest_path(cfg.dataset))
    ds = _make_dataset(cfg)
    ds.save(Path(out) / "dataset")
    return ds


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_generate(args):
    cfg = _resolve(args)
    out = _prepare_out(cfg.out)
    ds = _make_dataset(cfg)
    manifest = ds.save(out / "dataset")
    dump_config(cfg, out, command="generate")
    print(f"wrote {manifest} ({ds.sizes})")


def cmd_train(args):
    cfg = _resolve(args)
    out = _prepare_out(cfg.out)
    ds = _load_or_make_dataset(cfg, out)
    tc = cfg.training
    N = tc.n_neurons
    A = astrocyte_count(N, tc.proportion_index)
    spec = cfg.reservoir.template(N, A, seed=cfg.seed)
    weights = build(spec)
    params, hist, feats = train(spec, weights, ds, tc.train_config(), seed=cfg.seed)
    hist.write_csv(out / "loss_batches.csv", out / "loss_epochs.csv")
    weights.save(out / "reservoir", spec)
    params.save(out / "mlp", meta={"seed": cfg.seed})
    summary = {"N": N, "A": A, "ratio": A / N, "epochs": len(hist.epoch_train),
               "final_train_loss": hist.epoch_train[-1], "final_val_loss": hist.epoch_val[-1]}
    if len(hist.epoch_train) >= cfg.analysis.slope_epochs:
        summary["train_slope"] = analysis.learning_rate(hist.epoch_train, cfg.analysis.slope_epochs)
    test_x, test_y = feats["test"]
    if test_x.shape[0]:
        pred = forward(params, test_x)
        summary["test_mse_normalized"] = mse_loss(pred, test_y)
        raw_pred = ds.denormalize(pred.reshape(-1, 50, 3))
        summary["test_mse_original_units"] = mse_loss(raw_pred, ds.test_target)
    _write_json(out / "summary.json", _clean(summary))
    dump_config(cfg, out, command="train")
    print(f"trained N={N} A={A}: final train loss {hist.epoch_train[-1]:.4g}")


def cmd_sweep(args):
    cfg = _resolve(args)
    out = _prepare_out(cfg.out)
    ds = _load_or_make_dataset(cfg, out)
    an = cfg.analysis
    records = run_sweep(cfg.sweep, ds, cfg.reservoir.template(), cfg.training.train_config(),
                        global_seed=cfg.seed, out_dir=out, jobs=cfg.sweep.jobs or default_jobs(),
                        slope_epochs=an.slope_epochs, window=an.plateau_window, tol=an.plateau_tol)
    write_records(records, out / "records.csv")
    dump_config(cfg, out, command="sweep")
    n_div = sum(r.diverged for r in records)
    print(f"wrote {len(records)} records to {out / 'records.csv'} ({n_div} diverged)")


def analyze_records(records, cfg: PipelineConfig):
    """All analysis tables in memory; nothing touches disk here."""
    an = cfg.analysis
    usable = [r for r in records if not r.diverged]
    if len(usable) < an.min_records:
        raise AnalysisError(f"analysis needs at least {an.min_records} non-diverged records, "
                            f"got {len(usable)}")
    summary = {"n_records": len(records), "n_diverged": len(records) - len(usable),
               "ols": {}, "lasso": {}, "kde": {}, "skipped": {}}
    tables = {}
    points = [{"N": r.N, "A": r.A, "ratio": r.ratio, "train_slope": r.train_slope,
               "val_slope": r.val_slope, "train_plateau": r.train_plateau,
               "val_plateau": r.val_plateau} for r in usable]
    for target in analysis.TARGETS:
        rows = [r for r in usable if np.isfinite(getattr(r, target))]
        if len(rows) < an.min_records:
            summary["skipped"][target] = f"only {len(rows)} finite values"
            continue
        try:
            ols = analysis.ols_regression(rows, target)
        except AnalysisError as exc:
            summary["skipped"][target] = str(exc)
            continue
        summary["ols"][target] = {"intercept": ols.intercept, "coefficients": ols.coefficients,
                                  "r2": ols.r2, "vif": ols.vif, "rank": ols.rank,
                                  "subdesign_t": ols.subdesign_t}
        tables[f"ols_{target}.csv"] = (
            ["factor", "coefficient", "vif"],
            [[f, ols.coefficients[f], ols.vif[f]] for f in analysis.FACTORS])
        if len(rows) < 10:
            continue
        X, y = analysis._records_xy(rows, target)
        grid = analysis.lambda_grid(X, y, an.lambda_count, an.lambda_min_ratio)
        las = analysis.lasso_fit(X, y, grid, folds=an.cv_folds, seed=cfg.seed)
        summary["lasso"][target] = {"coefficients": las.coefficients, "lambda": las.lam,
                                    "correlation": las.correlation, "selected": las.selected,
                                    "converged": las.converged}
        tables[f"lasso_{target}.csv"] = (
            ["factor", "coefficient", "selected"],
            [[f, las.coefficients[f], int(f in las.selected)] for f in analysis.FACTORS])
        fit_of = {id(r): v for r, v in zip(rows, las.fitted)}
        for p, r in zip(points, usable):
            p[f"lasso_fit_{target}"] = fit_of.get(id(r), float("nan"))
        if target.endswith("slope"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                kde = analysis.kde_slope_vs_ratio(rows, target, n_grid=an.kde_grid)
            summary["kde"][target] = {"mode_ratio": kde.mode_ratio, "mode_slope": kde.mode_slope,
                                      "slope_cut": kde.slope_cut,
                                      "bandwidth": kde.bandwidth.tolist(),
                                      "bandwidth_floored": kde.bandwidth_floored.tolist()}
            tables[f"kde_{target}.csv"] = (
                ["ratio", "slope", "density"],
                [[rv, sv, kde.density[i, j]] for i, sv in enumerate(kde.slope_grid)
                 for j, rv in enumerate(kde.ratio_grid)])
    keys = list(points[0].keys()) if points else []
    for p in points:
        for k in keys:
            p.setdefault(k, float("nan"))
    tables["points.csv"] = (keys, [[p[k] for k in keys] for p in points])
    return summary, tables


def _write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def cmd_analyze(args):
    cfg = _resolve(args)
    path = Path(args.records)
    if not path.exists():
        raise CliError(f"records file not found: {path}", EXIT_IO)
    records = read_records(path)
    summary, tables = analyze_records(records, cfg)
    out = _prepare_out(cfg.out)
    for name, (header, rows) in tables.items():
        _write_table(out / name, header, rows)
    _write_json(out / "summary.json", _clean(summary))
    dump_config(cfg, out, command="analyze", records=str(path))
    for target, res in summary["lasso"].items():
        print(f"{target}: LASSO selected {res['selected']} r={res['correlation']:.3f}")
    for target, res in summary["kde"].items():
        print(f"{target}: KDE mode at A/N = {res['mode_ratio']:.3f}")


def cmd_plot(args):
    from .plots import plot_all

    analysis_dir = Path(args.analysis)
    if not analysis_dir.is_dir():
        raise CliError(f"analysis directory not found: {analysis_dir}", EXIT_IO)
    out = Path(args.out)
    paths = plot_all(analysis_dir, out)
    for p in paths:
        print(f"wrote {p}")


# --------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="astrolsm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default=None):
        p.add_argument("--config", help="pipeline JSON config (defaults used when omitted)")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--seed", type=int, help="global seed (overrides config)")

    p = sub.add_parser("generate", help="generate a Lorenz window dataset")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one readout on one reservoir")
    common(p)
    p.add_argument("--dataset", help="dataset directory or manifest (generated when omitted)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run the N x proportion x seed grid")
    common(p)
    p.add_argument("--dataset", help="dataset directory or manifest (generated when omitted)")
    p.add_argument("--jobs", type=int, help="worker processes (default: $ASTROLSM_JOBS or 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="regressions, LASSO and KDE over records.csv")
    common(p)
    p.add_argument("--records", required=True, help="records.csv written by sweep")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("plot", help="SVG figures from an analysis directory")
    p.add_argument("--analysis", required=True, help="directory written by analyze")
    p.add_argument("--out", required=True, help="directory for SVG files")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (TrainingDivergence, ReservoirDivergence, IntegrationError) as exc:
        print(f"error: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, AnalysisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
