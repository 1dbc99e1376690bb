"""Static SVG figures from an analysis directory."""
import csv
import json
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "astrolsm"
RATIO_REFERENCE_ID = "ratio-2-reference"
FIGURES = ("learning_rate_vs_size.svg", "lasso_reconstruction.svg", "kde_slope_vs_ratio.svg")


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _column(rows, key):
    return np.array([float(r[key]) if r[key] not in ("", None) else np.nan for r in rows])


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_learning_rate(points, path):
    total = _column(points, "N") + _column(points, "A")
    ratio = _column(points, "ratio")
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.8), sharey=False)
    for ax, key, title in zip(axes, ("train_slope", "val_slope"), ("training", "validation")):
        y = _column(points, key)
        ax.scatter(total, y, s=12 + 30 * (ratio - 0.75), alpha=0.6, edgecolor="k", linewidth=0.3)
        ax.set_xlabel("total units (N + A)")
        ax.set_ylabel("learning rate (loss slope, first epochs)")
        ax.set_title(f"{title}; marker size ~ A/N")
    fig.tight_layout()
    _save(fig, path)


def plot_lasso(points, summary, path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.8))
    for ax, key in zip(axes, ("train_slope", "val_slope")):
        fit_key = f"lasso_fit_{key}"
        if fit_key not in points[0]:
            ax.set_axis_off()
            continue
        actual = _column(points, key)
        fitted = _column(points, fit_key)
        ok = np.isfinite(actual) & np.isfinite(fitted)
        ax.scatter(actual[ok], fitted[ok], s=14, alpha=0.7)
        if ok.any():
            lo, hi = min(actual[ok].min(), fitted[ok].min()), max(actual[ok].max(), fitted[ok].max())
            ax.plot([lo, hi], [lo, hi], color="0.5", linestyle="--", linewidth=1)
        r = summary.get("lasso", {}).get(key, {}).get("correlation")
        ax.set_title(f"{key}: r = {r:.2f}" if r is not None else key)
        ax.set_xlabel("actual")
        ax.set_ylabel("LASSO reconstruction")
    fig.tight_layout()
    _save(fig, path)


def _kde_grid(rows):
    ratio = _column(rows, "ratio")
    slope = _column(rows, "slope")
    dens = _column(rows, "density")
    rg = np.unique(ratio)
    sg = np.unique(slope)
    grid = np.full((sg.size, rg.size), np.nan)
    grid[np.searchsorted(sg, slope), np.searchsorted(rg, ratio)] = dens
    return rg, sg, grid


def plot_kde(analysis_dir, summary, path):
    targets = [t for t in ("train_slope", "val_slope")
               if (Path(analysis_dir) / f"kde_{t}.csv").exists()]
    fig, axes = plt.subplots(1, max(1, len(targets)), figsize=(4.6 * max(1, len(targets)), 3.8),
                             squeeze=False)
    for ax, key in zip(axes[0], targets):
        rg, sg, grid = _kde_grid(_read_csv(Path(analysis_dir) / f"kde_{key}.csv"))
        mesh = ax.pcolormesh(rg, sg, grid, shading="auto", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label="density")
        mode = summary.get("kde", {}).get(key, {}).get("mode_ratio")
        if mode is not None:
            ax.axvline(mode, color="w", linestyle=":", linewidth=1)
        ax.set_xlabel("A/N ratio")
        ax.set_ylabel("learning rate")
        ax.set_title(key)
    # 2:1 reference on every panel; the first carries the stable id
    for k, ax in enumerate(axes[0]):
        ax.axvline(2.0, color="r", linestyle="--", linewidth=1.2,
                   gid=RATIO_REFERENCE_ID if k == 0 else f"{RATIO_REFERENCE_ID}-{k}")
    fig.tight_layout()
    _save(fig, path)


def plot_all(analysis_dir, out_dir):
    analysis_dir, out_dir = Path(analysis_dir), Path(out_dir)
    points_path = analysis_dir / "points.csv"
    summary_path = analysis_dir / "summary.json"
    for p in (points_path, summary_path):
        if not p.exists():
            raise FileNotFoundError(f"missing analysis artifact: {p}")
    points = _read_csv(points_path)
    if not points:
        raise ValueError(f"{points_path} holds no records")
    with open(summary_path) as fh:
        summary = json.load(fh)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / name for name in FIGURES]
    plot_learning_rate(points, paths[0])
    plot_lasso(points, summary, paths[1])
    plot_kde(analysis_dir, summary, paths[2])
    return paths
