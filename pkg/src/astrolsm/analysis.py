"""Loss-curve statistics and the factor analysis over sweep records.

Factors are neuron count N, astrocyte count A and their sum A+N.  The full
design (1, N, A, A+N) is rank deficient by construction, so OLS reports the
minimum-norm solution plus variance inflation factors, and LASSO is used to
pick the factor that carries the signal.
"""
import warnings
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

FACTORS = ("N", "A", "A+N")
TARGETS = ("train_slope", "val_slope", "train_plateau", "val_plateau")


class AnalysisError(ValueError):
    pass


# --------------------------------------------------------------------------
# loss curves
# --------------------------------------------------------------------------

def learning_rate(epoch_losses, n_epochs=10):
    """OLS slope of loss against epoch number over the first ``n_epochs`` epochs."""
    y = np.asarray(epoch_losses, dtype=np.float64)
    if y.size < n_epochs:
        raise AnalysisError(f"need at least {n_epochs} epoch losses, got {y.size}")
    y = y[:n_epochs]
    x = np.arange(1, n_epochs + 1, dtype=np.float64)
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


@dataclass
class Plateau:
    mean: float
    start_epoch: int        # 1-based
    fallback: bool


def plateau_loss(epoch_losses, window=5, tol=0.01, min_epochs=20) -> Plateau:
    """Mean loss from the point where the smoothed per-epoch slope drops below ``tol``
    of its initial magnitude.

    Local slopes are first differences; smoothing is a trailing mean over
    ``window`` differences.  When the criterion never fires the last 10% of
    epochs are used and ``fallback`` is set.
    """
    y = np.asarray(epoch_losses, dtype=np.float64)
    if y.size < min_epochs:
        raise AnalysisError(f"need at least {min_epochs} epoch losses, got {y.size}")
    d = np.diff(y)
    smoothed = np.convolve(d, np.ones(window) / window, mode="valid")
    # smoothed[k] averages d[k .. k+window-1]; it describes the slope arriving at epoch k+window+1
    initial = abs(smoothed[0])
    if initial == 0.0:
        hits = np.flatnonzero(np.abs(smoothed) == 0.0)
    else:
        hits = np.flatnonzero(np.abs(smoothed) < tol * initial)
    if hits.size:
        start = int(hits[0]) + window          # 0-based epoch index
        return Plateau(float(y[start:].mean()), start + 1, False)
    start = y.size - max(1, int(np.ceil(0.1 * y.size)))
    return Plateau(float(y[start:].mean()), start + 1, True)


# --------------------------------------------------------------------------
# regression
# --------------------------------------------------------------------------

def design_matrix(n, a):
    n = np.asarray(n, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    return np.column_stack([n, a, a + n])


def _records_xy(records, target):
    if target not in TARGETS:
        raise AnalysisError(f"unknown target {target!r}; choose from {TARGETS}")
    rows = [r for r in records if not r.diverged and np.isfinite(getattr(r, target))]
    X = design_matrix([r.N for r in rows], [r.A for r in rows])
    y = np.array([getattr(r, target) for r in rows], dtype=np.float64)
    return X, y


def _r2(y, fitted):
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 0.0
    return max(0.0, 1.0 - float(np.sum((y - fitted) ** 2)) / ss_tot)


def vif(X):
    """Variance inflation factor per column; ``inf`` under exact collinearity."""
    X = np.asarray(X, dtype=np.float64)
    out = []
    for j in range(X.shape[1]):
        others = np.column_stack([np.ones(X.shape[0]), np.delete(X, j, axis=1)])
        coef = np.linalg.lstsq(others, X[:, j], rcond=None)[0]
        r2 = _r2(X[:, j], others @ coef)
        out.append(float("inf") if r2 >= 1.0 - 1e-12 else 1.0 / (1.0 - r2))
    return out


def ols_t_stats(X, y):
    """Coefficients, standard errors and t statistics for a full-rank design (intercept added)."""
    D = np.column_stack([np.ones(len(y)), X])
    m, p = D.shape
    if m <= p or np.linalg.matrix_rank(D) < p:
        raise AnalysisError("design is not full rank")
    coef = np.linalg.solve(D.T @ D, D.T @ y)
    resid = y - D @ coef
    sigma2 = float(resid @ resid) / (m - p)
    se = np.sqrt(np.diag(sigma2 * np.linalg.inv(D.T @ D)))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, np.inf * np.sign(coef))
    return coef, se, t


@dataclass
class RegressionResult:
    intercept: float
    coefficients: Dict[str, float]
    r2: float
    vif: Dict[str, float]
    fitted: np.ndarray
    rank: int
    # t statistics on full-rank sub-designs, keyed by "+"-joined factor names
    subdesign_t: Dict[str, Dict[str, float]] = field(default_factory=dict)


SUBDESIGNS = (("N", "A"), ("N", "A+N"), ("A", "A+N"), ("A+N",))


def ols_fit(X, y, names=FACTORS) -> RegressionResult:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(np.ptp(X, axis=0) == 0):
        raise AnalysisError("degenerate predictor: a factor is constant across records")
    D = np.column_stack([np.ones(len(y)), X])
    coef = np.linalg.pinv(D) @ y
    fitted = D @ coef
    sub_t = {}
    for sub in SUBDESIGNS:
        if not set(sub) <= set(names):
            continue
        cols = [names.index(s) for s in sub]
        try:
            _, _, t = ols_t_stats(X[:, cols], y)
        except AnalysisError:
            continue
        sub_t["+".join(sub) if len(sub) > 1 else sub[0]] = dict(zip(sub, t[1:].tolist()))
    return RegressionResult(
        intercept=float(coef[0]), coefficients=dict(zip(names, coef[1:].tolist())),
        r2=_r2(y, fitted), vif=dict(zip(names, vif(X))), fitted=fitted,
        rank=int(np.linalg.matrix_rank(D)), subdesign_t=sub_t)


def ols_regression(records, target="train_slope") -> RegressionResult:
    X, y = _records_xy(records, target)
    if len(y) < 5:
        raise AnalysisError(f"OLS needs at least 5 usable records, got {len(y)}")
    return ols_fit(X, y)


# --------------------------------------------------------------------------
# LASSO
# --------------------------------------------------------------------------

def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_cd(X, y, lam, tol=1e-8, max_iter=100_000, coef=None):
    """Cyclic coordinate descent for (1/2m)||y - X b||^2 + lam ||b||_1 (no intercept).

    Returns ``(coef, converged, iterations)``; convergence is max |delta coef| < tol
    over one full sweep.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m, p = X.shape
    b = np.zeros(p) if coef is None else np.array(coef, dtype=np.float64)
    col_sq = np.einsum("ij,ij->j", X, X) / m
    resid = y - X @ b
    for it in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            old = b[j]
            rho = X[:, j] @ resid / m + col_sq[j] * old
            new = soft_threshold(rho, lam) / col_sq[j]
            if new != old:
                resid -= X[:, j] * (new - old)
                b[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta < tol:
            return b, True, it
    return b, False, max_iter


def standardize(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    if np.any(sd == 0):
        raise AnalysisError("degenerate predictor: zero variance")
    return (X - mu) / sd, mu, sd


def lambda_grid(X, y, n=50, min_ratio=1e-4):
    Z, _, _ = standardize(np.asarray(X, dtype=np.float64))
    yc = np.asarray(y, dtype=np.float64) - np.mean(y)
    lam_max = float(np.max(np.abs(Z.T @ yc)) / len(yc))
    if lam_max == 0.0:
        lam_max = 1.0
    return np.geomspace(lam_max, lam_max * min_ratio, n)


def pearson_correlation(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise AnalysisError("pearson_correlation needs two equal-length vectors of length >= 2")
    ac = a - a.mean()
    bc = b - b.mean()
    sa, sb = np.sqrt(ac @ ac), np.sqrt(bc @ bc)
    if sa == 0 or sb == 0:
        raise AnalysisError("zero variance input")
    return float(np.clip((ac @ bc) / (sa * sb), -1.0, 1.0))


@dataclass
class LassoResult:
    coefficients: Dict[str, float]      # on standardised predictors
    lam: float
    correlation: float                  # Pearson r between fitted and actual target
    selected: List[str]
    fitted: np.ndarray
    converged: bool
    cv_lambdas: np.ndarray
    cv_mse: np.ndarray


def lasso_fit(X, y, lambdas=None, folds=5, seed=0, names=FACTORS, tol=1e-8,
              max_iter=100_000) -> LassoResult:
    """Standardise, pick lambda by k-fold CV MSE, refit on all rows."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if lambdas is None:
        lambdas = lambda_grid(X, y)
    lambdas = np.sort(np.asarray(lambdas, dtype=np.float64))[::-1]
    if lambdas.size == 0:
        raise AnalysisError("lambda grid is empty")
    m = len(y)
    converged = True
    if lambdas.size == 1:
        cv_mse = np.array([np.nan])
        best = float(lambdas[0])
    else:
        fold_of = np.random.default_rng(seed).permutation(m) % folds
        cv_mse = np.zeros(lambdas.size)
        for f in range(folds):
            tr, te = fold_of != f, fold_of == f
            if not te.any() or tr.sum() < 2:
                continue
            Z, mu, sd = standardize(X[tr])
            ymu = y[tr].mean()
            b = None
            for k, lam in enumerate(lambdas):       # warm start down the path
                b, ok, _ = lasso_cd(Z, y[tr] - ymu, lam, tol=tol, max_iter=max_iter, coef=b)
                converged &= ok
                pred = ((X[te] - mu) / sd) @ b + ymu
                cv_mse[k] += np.sum((y[te] - pred) ** 2)
        cv_mse /= m
        best = float(lambdas[int(np.argmin(cv_mse))])
    Z, mu, sd = standardize(X)
    ymu = y.mean()
    b, ok, _ = lasso_cd(Z, y - ymu, best, tol=tol, max_iter=max_iter)
    converged &= ok
    if not converged:
        warnings.warn("LASSO coordinate descent hit the iteration cap before converging",
                      RuntimeWarning, stacklevel=2)
    fitted = Z @ b + ymu
    try:
        r = pearson_correlation(fitted, y)
    except AnalysisError:
        r = float("nan")
    b = b + 0.0       # -0.0 from soft-thresholding prints badly
    return LassoResult(coefficients=dict(zip(names, b.tolist())), lam=best, correlation=r,
                       selected=[nm for nm, c in zip(names, b) if c != 0.0], fitted=fitted,
                       converged=converged, cv_lambdas=lambdas, cv_mse=cv_mse)


def lasso_regression(records, target="train_slope", lambdas=None, folds=5, seed=0):
    X, y = _records_xy(records, target)
    if len(y) < 10:
        raise AnalysisError(f"LASSO needs at least 10 usable records, got {len(y)}")
    return lasso_fit(X, y, lambdas=lambdas, folds=folds, seed=seed)


# --------------------------------------------------------------------------
# kernel density
# --------------------------------------------------------------------------

BANDWIDTH_FLOOR = 1e-6


def scott_bandwidth(values):
    values = np.asarray(values, dtype=np.float64)
    m = values.shape[0]
    sd = values.std(axis=0, ddof=1) if m > 1 else np.zeros(values.shape[1:])
    h = sd * m ** (-1.0 / 6.0)
    floored = ~(h > BANDWIDTH_FLOOR)
    return np.where(floored, BANDWIDTH_FLOOR, h), floored


def gaussian_kde_2d(points, gx, gy, bandwidth=None):
    """Product-Gaussian KDE of (m, 2) ``points`` on the grid ``gx`` x ``gy``.

    Returns ``(density[len(gy), len(gx)], bandwidth, floored)``.
    """
    points = np.asarray(points, dtype=np.float64)
    if bandwidth is None:
        bandwidth, floored = scott_bandwidth(points)
    else:
        bandwidth = np.asarray(bandwidth, dtype=np.float64)
        floored = np.zeros(2, dtype=bool)
    gx = np.asarray(gx, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    kx = np.exp(-0.5 * ((gx[None, :] - points[:, 0:1]) / bandwidth[0]) ** 2)
    ky = np.exp(-0.5 * ((gy[None, :] - points[:, 1:2]) / bandwidth[1]) ** 2)
    norm = 2.0 * np.pi * bandwidth[0] * bandwidth[1] * points.shape[0]
    density = (ky.T @ kx) / norm
    return density, bandwidth, floored


@dataclass
class KdeResult:
    ratio_grid: np.ndarray
    slope_grid: np.ndarray
    density: np.ndarray          # (len(slope_grid), len(ratio_grid))
    bandwidth: np.ndarray        # (ratio, slope)
    bandwidth_floored: np.ndarray
    mode_ratio: float            # ratio at the density peak within the most negative slopes
    mode_slope: float
    slope_cut: float             # slopes <= slope_cut form the searched half


def default_grid(values, bandwidth, n=200, pad=3.0):
    return np.linspace(values.min() - pad * bandwidth, values.max() + pad * bandwidth, n)


def kde_points(points, ratio_grid=None, slope_grid=None, n_grid=200) -> KdeResult:
    points = np.asarray(points, dtype=np.float64)
    bw, floored = scott_bandwidth(points)
    if floored.any():
        warnings.warn(f"zero-variance KDE dimension; bandwidth floored to {BANDWIDTH_FLOOR}",
                      RuntimeWarning, stacklevel=2)
    if ratio_grid is None:
        ratio_grid = default_grid(points[:, 0], bw[0], n_grid)
    if slope_grid is None:
        slope_grid = default_grid(points[:, 1], bw[1], n_grid)
    density, bw, _ = gaussian_kde_2d(points, ratio_grid, slope_grid, bw)
    lo, hi = points[:, 1].min(), points[:, 1].max()
    cut = 0.5 * (lo + hi)
    rows = np.flatnonzero(slope_grid <= cut)
    if rows.size == 0:
        rows = np.array([int(np.argmin(slope_grid))])
    sub = density[rows]
    i, j = np.unravel_index(int(np.argmax(sub)), sub.shape)
    return KdeResult(ratio_grid=np.asarray(ratio_grid), slope_grid=np.asarray(slope_grid),
                     density=density, bandwidth=bw, bandwidth_floored=floored,
                     mode_ratio=float(ratio_grid[j]), mode_slope=float(slope_grid[rows[i]]),
                     slope_cut=float(cut))


def kde_slope_vs_ratio(records, target="train_slope", ratio_grid=None, slope_grid=None,
                       n_grid=200, min_records=10) -> KdeResult:
    rows = [r for r in records if not r.diverged and np.isfinite(getattr(r, target))]
    if len(rows) < min_records:
        raise AnalysisError(f"KDE needs at least {min_records} records with finite slopes, got {len(rows)}")
    points = np.array([[r.ratio, getattr(r, target)] for r in rows])
    return kde_points(points, ratio_grid, slope_grid, n_grid)


def kde_slope_by_ratio_bin(records, target="train_slope", slope_grid=None, n_grid=200):
    """1-D alternative: Gaussian KDE of slopes separately for each distinct A/N ratio.

    Returns ``(ratios, slope_grid, densities[len(ratios), len(slope_grid)])``.
    """
    rows = [r for r in records if not r.diverged and np.isfinite(getattr(r, target))]
    slopes = np.array([getattr(r, target) for r in rows])
    ratios = np.array([r.ratio for r in rows])
    if slope_grid is None:
        h, _ = scott_bandwidth(slopes[:, None])
        slope_grid = default_grid(slopes, h[0], n_grid)
    keys = np.unique(ratios)
    dens = np.zeros((keys.size, len(slope_grid)))
    for k, r in enumerate(keys):
        s = slopes[ratios == r]
        h, _ = scott_bandwidth(s[:, None])
        z = (slope_grid[None, :] - s[:, None]) / h[0]
        dens[k] = np.exp(-0.5 * z ** 2).sum(axis=0) / (np.sqrt(2 * np.pi) * h[0] * s.size)
    return keys, np.asarray(slope_grid), dens
