"""Statistical and financial comparison metrics.

Autocorrelations, correlation matrices, tail risk (VaR/ES with linear
quantile interpolation), binary classification metrics, the toy daily-PnL
strategy with its annualized Sharpe ratio (constant 252), bootstrap Sharpe
confidence intervals, realized quadratic-variation dispersion, and
annualized return/volatility in percent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .stochastic import RandomSource

TRADING_DAYS = 252
LOG_LOSS_CLIP = 1e-12


def acf(series: np.ndarray, max_lag: int, squared: bool = False) -> np.ndarray:
    """Sample autocorrelation at lags 0..max_lag (full-sample variance norm).

    Constant series have no autocorrelation; every lag is NaN then (lag 0
    stays 1) and the caller can detect the condition from the NaNs.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("acf expects a 1-D series")
    if x.size <= max_lag:
        raise DataError(f"series length {x.size} must exceed max_lag {max_lag}")
    if squared:
        x = x**2
    c = x - x.mean()
    denom = np.dot(c, c)
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    if denom == 0.0:
        out[1:] = np.nan
        return out
    for lag in range(1, max_lag + 1):
        out[lag] = np.dot(c[:-lag], c[lag:]) / denom
    return out


def correlation_matrix(returns: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pearson correlations [d, d] plus a mask of zero-variance columns.

    Degenerate columns get zero off-diagonals and a unit diagonal.
    """
    x = np.asarray(returns, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError("need at least 2 rows of returns")
    d = x.shape[1]
    stds = x.std(axis=0)
    degenerate = stds == 0.0
    safe = np.where(degenerate, 1.0, stds)
    z = (x - x.mean(axis=0)) / safe
    corr = z.T @ z / x.shape[0]
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    np.fill_diagonal(corr, 1.0)
    return corr, degenerate


def var_es(returns: np.ndarray, level: float) -> tuple[float, float]:
    """(VaR, ES) at ``level`` as positive loss magnitudes.

    VaR is minus the linear-interpolation quantile of returns at 1-level;
    ES is minus the mean of returns at or below that quantile.
    """
    x = np.asarray(returns, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise DataError("empty return sample")
    minimum = 500 if level >= 0.99 else 100
    if x.size < minimum:
        import warnings

        warnings.warn(
            f"only {x.size} observations for level {level}; tail estimates are noisy",
            stacklevel=2,
        )
    q = float(np.quantile(x, 1.0 - level))
    tail = x[x <= q]
    return -q, -float(tail.mean())


def classification_metrics(probs: np.ndarray, labels: np.ndarray) -> dict:
    """Accuracy (predict 1 when p >= 0.5), log loss, and midrank ROC AUC."""
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if p.size == 0 or p.size != y.size:
        raise DataError("probs and labels must be nonempty and equal length")
    if not np.isin(y, (0, 1)).all():
        raise DataError("labels must be 0/1")
    y = y.astype(np.float64)
    pred = (p >= 0.5).astype(np.float64)
    accuracy = float(np.mean(pred == y))
    pc = np.clip(p, LOG_LOSS_CLIP, 1.0 - LOG_LOSS_CLIP)
    log_loss = float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))

    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        auc = math.nan
    else:
        order = np.argsort(p, kind="stable")
        ranks = np.empty(p.size)
        sorted_p = p[order]
        i = 0
        while i < p.size:
            j = i
            while j + 1 < p.size and sorted_p[j + 1] == sorted_p[i]:
                j += 1
            ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
            i = j + 1
        auc = float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
    return {"accuracy": accuracy, "log_loss": log_loss, "roc_auc": auc}


@dataclass
class PnlMetrics:
    pnl: np.ndarray
    mean: float
    std: float
    sharpe: float
    degenerate_std: bool = False


def pnl_metrics(probs: np.ndarray, returns: np.ndarray) -> PnlMetrics:
    """Daily PnL of the long/short toy strategy w = 2p - 1, no costs.

    PnL_t = (1/d) w_t . R_t; std uses the M-1 denominator; Sharpe is
    mean/std * sqrt(252). A zero std yields a signed-infinity sentinel.
    """
    p = np.asarray(probs, dtype=np.float64)
    r = np.asarray(returns, dtype=np.float64)
    if p.shape != r.shape or p.ndim != 2:
        raise DataError(f"probs {p.shape} and returns {r.shape} must be [dates, instruments]")
    w = 2.0 * p - 1.0
    pnl = (w * r).mean(axis=1)
    mean = float(pnl.mean())
    std = float(pnl.std(ddof=1)) if pnl.size > 1 else 0.0
    if std == 0.0:
        return PnlMetrics(pnl=pnl, mean=mean, std=0.0,
                          sharpe=math.copysign(math.inf, mean) if mean else 0.0,
                          degenerate_std=True)
    return PnlMetrics(pnl=pnl, mean=mean, std=std,
                      sharpe=mean / std * math.sqrt(TRADING_DAYS))


def _degenerate_std(pnl: np.ndarray) -> bool:
    # a constant series leaves rounding dust in std; compare to its scale
    return pnl.std(ddof=1) <= 1e-12 * max(1.0, float(np.abs(pnl).max(initial=0.0)))


def sharpe_ratio(pnl: np.ndarray) -> float:
    pnl = np.asarray(pnl, dtype=np.float64)
    if _degenerate_std(pnl):
        raise DataError("degenerate PnL series: zero standard deviation")
    return float(pnl.mean() / pnl.std(ddof=1) * math.sqrt(TRADING_DAYS))


def bootstrap_sharpe_ci(pnl: np.ndarray, rng: RandomSource, level: float = 0.95,
                        n_boot: int = 10_000) -> tuple[float, float]:
    """Percentile bootstrap interval for the Sharpe ratio (i.i.d. resampling)."""
    pnl = np.asarray(pnl, dtype=np.float64).reshape(-1)
    if pnl.size < 30:
        raise DataError(f"need at least 30 observations, got {pnl.size}")
    if _degenerate_std(pnl):
        raise DataError("degenerate PnL series: zero standard deviation")
    idx = rng.integers(0, pnl.size, size=(n_boot, pnl.size))
    samples = pnl[idx]
    means = samples.mean(axis=1)
    stds = samples.std(axis=1, ddof=1)
    keep = stds > 0
    sharpes = means[keep] / stds[keep] * math.sqrt(TRADING_DAYS)
    alpha = (1.0 - level) / 2.0
    return (
        float(np.quantile(sharpes, alpha)),
        float(np.quantile(sharpes, 1.0 - alpha)),
    )


def qv_dispersion(paths: np.ndarray, total_time: float = 1.0) -> dict:
    """Realized quadratic variation per path and its cross-path spread.

    QV is the sum of squared increments over all dimensions, normalized by
    the total elapsed time.
    """
    x = np.asarray(paths, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] < 2:
        raise DataError("paths must be [paths, dates, dims] with >= 2 dates")
    qv = (np.diff(x, axis=1) ** 2).sum(axis=(1, 2)) / total_time
    return {
        "per_path": qv,
        "mean": float(qv.mean()),
        "std": float(qv.std()),
    }


def annualized_stats(returns: np.ndarray) -> tuple[float, float]:
    """(annualized return %, annualized std %) of a daily return series."""
    x = np.asarray(returns, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise DataError("empty return sample")
    ann_ret = x.mean() * TRADING_DAYS * 100.0
    ann_std = x.std(ddof=1) * math.sqrt(TRADING_DAYS) * 100.0 if x.size > 1 else 0.0
    return float(ann_ret), float(ann_std)


# ---------------------------------------------------------------------------
# dataset-level comparison


def tail_risk_table(real: np.ndarray, synth: np.ndarray) -> dict:
    """VaR/ES at 95/99 plus annualized stats, per source, from pooled returns."""
    table = {}
    for src, sample in (("real", real), ("synth", synth)):
        var95, es95 = var_es(sample, 0.95)
        var99, es99 = var_es(sample, 0.99)
        ann_ret, ann_std = annualized_stats(sample)
        table[src] = {
            "var_99": var99, "var_95": var95,
            "es_99": es99, "es_95": es95,
            "ann_ret_pct": ann_ret, "ann_std_pct": ann_std,
        }
    return table


def compare_datasets(real_values: np.ndarray, synth_values: np.ndarray,
                     max_lag: int = 20, total_time: float = 1.0) -> dict:
    """Full comparison report between two [paths, dates, dims] datasets.

    Returns-level metrics are computed on per-interval increments. ACF
    curves are averaged across paths and dimensions; correlation matrices
    pool increments across paths.
    """
    real = np.asarray(real_values, dtype=np.float64)
    synth = np.asarray(synth_values, dtype=np.float64)
    if real.ndim != 3 or synth.ndim != 3 or real.shape[2] != synth.shape[2]:
        raise DataError("datasets must be [paths, dates, dims] with matching dims")
    r_inc = np.diff(real, axis=1)
    s_inc = np.diff(synth, axis=1)
    lag_cap = min(max_lag, real.shape[1] - 2, synth.shape[1] - 2)

    def mean_acf(inc, squared):
        curves = []
        for m in range(inc.shape[0]):
            for j in range(inc.shape[2]):
                series = inc[m, :, j]
                if series.std() == 0:
                    continue
                curves.append(acf(series, lag_cap, squared=squared))
        if not curves:
            return np.full(lag_cap + 1, np.nan)
        return np.mean(curves, axis=0)

    pooled_r = r_inc.reshape(-1)
    pooled_s = s_inc.reshape(-1)
    lo = min(pooled_r.min(), pooled_s.min())
    hi = max(pooled_r.max(), pooled_s.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, 31)

    report = {
        "acf_returns": {"real": mean_acf(r_inc, False).tolist(),
                        "synth": mean_acf(s_inc, False).tolist()},
        "acf_squared": {"real": mean_acf(r_inc, True).tolist(),
                        "synth": mean_acf(s_inc, True).tolist()},
        "correlation": {
            "real": correlation_matrix(r_inc.reshape(-1, real.shape[2]))[0].tolist(),
            "synth": correlation_matrix(s_inc.reshape(-1, synth.shape[2]))[0].tolist(),
        },
        "tail_risk": tail_risk_table(pooled_r, pooled_s),
        "histogram": {
            "edges": edges.tolist(),
            "real": np.histogram(pooled_r, bins=edges)[0].tolist(),
            "synth": np.histogram(pooled_s, bins=edges)[0].tolist(),
        },
        "qv": {
            "real": {k: v for k, v in qv_dispersion(real, total_time).items() if k != "per_path"},
            "synth": {k: v for k, v in qv_dispersion(synth, total_time).items() if k != "per_path"},
        },
    }
    gaps = {}
    for key, row in report["tail_risk"]["real"].items():
        gaps[key] = report["tail_risk"]["synth"][key] - row
    report["tail_risk_gap"] = gaps
    return report
