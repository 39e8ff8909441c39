"""Factor-model pipeline for high-dimensional return panels.

PCA factor extraction on centered returns, k-means grouping of the factors,
a two-component Gaussian mixture per residual dimension, sliding-window
dataset assembly with sign targets, reconstruction, handcrafted feature
rows, and the plain noise-augmentation baseline.

Factors are clustered on summary statistics of their series (standard
deviation, excess kurtosis, lag-1 autocorrelation); the choice of
clustering representation is configurable because nothing pins it down.
PCA is fit on raw centered returns by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DimensionError, DomainError

CUM_HORIZONS = (5, 10, 21, 63, 126, 252)
Z_HORIZONS = (3, 5, 10, 21)

GMM_MAX_ITER = 100
GMM_TOL = 1e-8
GMM_VAR_FLOOR = 1e-10


# ---------------------------------------------------------------------------
# PCA


@dataclass
class PcaModel:
    mean: np.ndarray  # [d]
    components: np.ndarray  # [d, m], orthonormal columns
    explained_variance: np.ndarray  # [m], non-increasing

    @property
    def n_factors(self) -> int:
        return self.components.shape[1]


def pca_fit(returns: np.ndarray, n_factors: int) -> PcaModel:
    """Eigendecomposition PCA of the return covariance (1/(N-1) convention)."""
    returns = np.asarray(returns, dtype=np.float64)
    if returns.ndim != 2:
        raise DataError("returns must be [dates, instruments]")
    n, d = returns.shape
    if not 1 <= n_factors <= min(n - 1, d):
        raise ConfigError(
            f"n_factors must lie in [1, min(N-1, d)] = [1, {min(n - 1, d)}], got {n_factors}"
        )
    mean = returns.mean(axis=0)
    centered = returns - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    return PcaModel(
        mean=mean,
        components=eigvecs[:, order[:n_factors]],
        explained_variance=np.clip(eigvals[order[:n_factors]], 0.0, None),
    )


def pca_transform(model: PcaModel, returns: np.ndarray) -> np.ndarray:
    return (np.asarray(returns, dtype=np.float64) - model.mean) @ model.components


def pca_inverse(model: PcaModel, factors: np.ndarray) -> np.ndarray:
    return np.asarray(factors, dtype=np.float64) @ model.components.T + model.mean


# ---------------------------------------------------------------------------
# k-means


def factor_cluster_features(factors: np.ndarray) -> np.ndarray:
    """Per-factor summary statistics: std, excess kurtosis, lag-1 autocorr."""
    factors = np.asarray(factors, dtype=np.float64)
    feats = []
    for j in range(factors.shape[1]):
        f = factors[:, j]
        c = f - f.mean()
        var = c.var()
        std = math.sqrt(var)
        kurt = float(np.mean(c**4) / var**2 - 3.0) if var > 0 else 0.0
        acf1 = float(np.dot(c[:-1], c[1:]) / np.dot(c, c)) if var > 0 else 0.0
        feats.append([std, kurt, acf1])
    return np.asarray(feats)


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
           n_restarts: int = 10, max_iter: int = 300) -> tuple[np.ndarray, float]:
    """Lloyd's algorithm with k-means++ seeding; best inertia over restarts.

    Args:
        points: [m, f] feature rows to cluster.
        k: number of clusters, at most m.
        rng: seeding source.

    Returns:
        (assignments [m], inertia).
    """
    points = np.asarray(points, dtype=np.float64)
    m = points.shape[0]
    if k > m:
        raise ConfigError(f"k={k} exceeds number of points {m}")
    best_assign, best_inertia = None, math.inf
    for _ in range(n_restarts):
        centers = _kmeanspp_seed(points, k, rng)
        assign = np.zeros(m, dtype=np.int64)
        for _ in range(max_iter):
            dist = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_assign = dist.argmin(axis=1)
            for c in range(k):
                sel = new_assign == c
                if sel.any():
                    centers[c] = points[sel].mean(axis=0)
            if np.array_equal(new_assign, assign):
                break
            assign = new_assign
        inertia = float(((points - centers[assign]) ** 2).sum())
        if inertia < best_inertia:
            best_inertia, best_assign = inertia, assign.copy()
    return best_assign, best_inertia


def _kmeanspp_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = points.shape[0]
    centers = [points[int(rng.integers(m))]]
    for _ in range(k - 1):
        d2 = np.min(
            ((points[:, None, :] - np.asarray(centers)[None, :, :]) ** 2).sum(axis=2),
            axis=1,
        )
        total = d2.sum()
        if total <= 0:
            centers.append(points[int(rng.integers(m))])
            continue
        probs = d2 / total
        centers.append(points[int(rng.choice(m, p=probs))])
    return np.asarray(centers, dtype=np.float64)


# ---------------------------------------------------------------------------
# two-component Gaussian mixture


@dataclass
class Gmm2:
    weights: np.ndarray  # [2], positive, sums to 1
    means: np.ndarray  # [2]
    variances: np.ndarray  # [2], floored
    log_likelihood: float = math.nan

    def to_list(self) -> list:
        return [self.weights.tolist(), self.means.tolist(), self.variances.tolist()]


def _gmm2_loglik(x, weights, means, variances):
    comp = (
        weights
        / np.sqrt(2 * math.pi * variances)
        * np.exp(-0.5 * (x[:, None] - means) ** 2 / variances)
    )
    return float(np.sum(np.log(comp.sum(axis=1) + 1e-300))), comp


def gmm2_fit(x: np.ndarray) -> Gmm2:
    """EM fit of a univariate two-component mixture.

    Runs at most 100 iterations or to log-likelihood tolerance 1e-8, with a
    variance floor of 1e-10; the log-likelihood is asserted non-decreasing
    at every iteration.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 10:
        raise DataError(f"need a 1-D sample of >= 10 values, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise DataError("non-finite values in mixture input")

    lo, hi = np.quantile(x, [0.25, 0.75])
    means = np.array([lo, hi], dtype=np.float64)
    if lo == hi:
        means = np.array([lo - 1e-3, hi + 1e-3])
    variances = np.full(2, max(x.var(), GMM_VAR_FLOOR))
    weights = np.array([0.5, 0.5])

    prev = -math.inf
    for it in range(GMM_MAX_ITER):
        ll, comp = _gmm2_loglik(x, weights, means, variances)
        if ll < prev - 1e-9 * max(1.0, abs(prev)):
            raise AssertionError(f"EM log-likelihood decreased at iteration {it}")
        if ll - prev < GMM_TOL and it > 0:
            prev = ll
            break
        prev = ll
        resp = comp / comp.sum(axis=1, keepdims=True)
        n_k = resp.sum(axis=0)
        weights = n_k / x.size
        means = (resp * x[:, None]).sum(axis=0) / n_k
        variances = (resp * (x[:, None] - means) ** 2).sum(axis=0) / n_k
        variances = np.maximum(variances, GMM_VAR_FLOOR)
    return Gmm2(weights=weights, means=means, variances=variances, log_likelihood=prev)


def gmm2_sample(model: Gmm2, size, rng: np.random.Generator) -> np.ndarray:
    comp = rng.choice(2, size=size, p=model.weights / model.weights.sum())
    z = rng.standard_normal(size)
    return model.means[comp] + np.sqrt(model.variances[comp]) * z


# ---------------------------------------------------------------------------
# full factor model


@dataclass
class FactorModel:
    pca: PcaModel
    factor_clusters: np.ndarray  # [m] cluster ids
    residual_gmms: list[Gmm2] = field(default_factory=list)  # one per instrument

    @property
    def n_factors(self) -> int:
        return self.pca.n_factors


def fit_factor_model(returns: np.ndarray, n_factors: int, n_clusters: int,
                     rng: np.random.Generator) -> FactorModel:
    model = pca_fit(returns, n_factors)
    factors = pca_transform(model, returns)
    assignments, _ = kmeans(factor_cluster_features(factors), n_clusters, rng)
    residuals = returns - pca_inverse(model, factors)
    gmms = [gmm2_fit(residuals[:, j]) for j in range(returns.shape[1])]
    return FactorModel(pca=model, factor_clusters=assignments, residual_gmms=gmms)


def reconstruct(factors: np.ndarray, model: FactorModel | PcaModel,
                residuals: np.ndarray) -> np.ndarray:
    """Rebuild returns as factors @ P^T + residuals + mean."""
    pca = model.pca if isinstance(model, FactorModel) else model
    factors = np.asarray(factors, dtype=np.float64)
    residuals = np.asarray(residuals, dtype=np.float64)
    if factors.shape[1] != pca.n_factors or residuals.shape[1] != pca.components.shape[0]:
        raise DimensionError(
            f"shapes {factors.shape} / {residuals.shape} do not match the model"
        )
    if factors.shape[0] != residuals.shape[0]:
        raise DimensionError("factors and residuals must cover the same dates")
    return factors @ pca.components.T + pca.mean + residuals


def sample_residuals(model: FactorModel, n_dates: int, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. residual rows from the per-instrument mixtures."""
    cols = [gmm2_sample(g, n_dates, rng) for g in model.residual_gmms]
    return np.column_stack(cols)


FACTOR_MAGIC = b"TSBRIDGE.FACT\x00"
FACTOR_FORMAT_VERSION = 1


def save_factor_model(path, model: FactorModel, instrument_names: list[str]):
    from .container import write_container

    gmm_block = np.stack(
        [np.stack([g.weights, g.means, g.variances]) for g in model.residual_gmms]
    )  # [d, 3, 2]
    arrays = [
        ("mean", model.pca.mean),
        ("components", model.pca.components),
        ("explained_variance", model.pca.explained_variance),
        ("factor_clusters", model.factor_clusters.astype(np.float64)),
        ("residual_gmms", gmm_block),
    ]
    meta = {
        "n_factors": model.n_factors,
        "instrument_names": list(instrument_names),
    }
    write_container(path, FACTOR_MAGIC, FACTOR_FORMAT_VERSION, meta, arrays)


def load_factor_model(path) -> tuple[FactorModel, list[str]]:
    from .container import read_container

    header, payload = read_container(path, FACTOR_MAGIC, FACTOR_FORMAT_VERSION)
    pca = PcaModel(
        mean=payload["mean"],
        components=payload["components"],
        explained_variance=payload["explained_variance"],
    )
    gmms = [
        Gmm2(weights=block[0], means=block[1], variances=block[2])
        for block in payload["residual_gmms"]
    ]
    model = FactorModel(
        pca=pca,
        factor_clusters=payload["factor_clusters"].astype(np.int64),
        residual_gmms=gmms,
    )
    return model, list(header["instrument_names"])


# ---------------------------------------------------------------------------
# windows and targets


def sliding_windows(series: np.ndarray, length: int = 253, stride: int = 1) -> np.ndarray:
    """All windows of ``length`` rows; shape [n_windows, length, d]."""
    series = np.asarray(series, dtype=np.float64)
    n = series.shape[0]
    if n < length:
        raise DataError(f"series of {n} rows is shorter than window length {length}")
    starts = range(0, n - length + 1, stride)
    return np.stack([series[s : s + length] for s in starts])


def split_target(window: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Input rows and per-instrument positive-sign labels of the last row."""
    window = np.asarray(window, dtype=np.float64)
    return window[:-1], (window[-1] > 0).astype(np.int64)


# ---------------------------------------------------------------------------
# handcrafted features


def feature_columns(cum_horizons=CUM_HORIZONS, z_horizons=Z_HORIZONS) -> list[str]:
    cols = ["feature.return_t-1_market"]
    for h1 in cum_horizons:
        cols += [f"feature.cum_ret_{h1}", f"feature.vol_{h1}"]
    for h in z_horizons:
        cols += [
            f"feature.ret_t-1_zscore_{h}",
            f"feature.mkt_cumret_{h}",
            f"feature.mkt_vol_{h}",
            f"feature.mkt_mean_{h}",
        ]
    return cols


def engineer_features(returns: np.ndarray, t: int,
                      cum_horizons=CUM_HORIZONS, z_horizons=Z_HORIZONS,
                      return_degenerate_mask: bool = False):
    """Per-instrument feature rows at date index ``t`` (0-based).

    Only observations at indices <= t enter any feature. Degenerate z-score
    denominators produce 0; the optional mask reports which instruments hit
    that convention at any horizon.
    """
    returns = np.asarray(returns, dtype=np.float64)
    if returns.ndim != 2:
        raise DataError("returns must be [dates, instruments]")
    max_h = max(max(cum_horizons), max(z_horizons))
    if t < max_h - 1 or t < 1:
        raise DomainError(f"t={t} below the maximum feature horizon {max_h}")
    if t >= returns.shape[0]:
        raise DataError(f"t={t} beyond the last date {returns.shape[0] - 1}")
    market = returns.mean(axis=1)
    d = returns.shape[1]
    degenerate = np.zeros(d, dtype=bool)
    rows = [np.full(d, market[t - 1])]
    for h1 in cum_horizons:
        win = returns[t - h1 + 1 : t + 1]
        rows.append(win.sum(axis=0))
        rows.append(win.std(axis=0, ddof=1))
    for h in z_horizons:
        win = returns[t - h + 1 : t + 1]
        mu = win.mean(axis=0)
        sd = win.std(axis=0, ddof=1)
        # constant windows leave rounding dust in sd; treat it as zero
        tol = 1e-12 * np.maximum(np.abs(win).max(axis=0), 1e-300)
        degen_h = sd <= tol
        degenerate |= degen_h
        z = np.where(degen_h, 0.0, (returns[t - 1] - mu) / np.where(degen_h, 1.0, sd))
        rows.append(z)
        mkt_win = market[t - h + 1 : t + 1]
        rows.append(np.full(d, mkt_win.sum()))
        rows.append(np.full(d, mkt_win.std(ddof=1)))
        rows.append(np.full(d, mkt_win.mean()))
    features = np.column_stack(rows)
    if return_degenerate_mask:
        return features, degenerate
    return features


# ---------------------------------------------------------------------------
# noise baseline


def noise_augment(window: np.ndarray, n_copies: int, rng: np.random.Generator,
                  noise_scale: float = 0.5) -> np.ndarray:
    """Noise-baseline copies: window + scale * eps, eps ~ N(0, window std^2)."""
    window = np.asarray(window, dtype=np.float64)
    if n_copies < 1:
        raise ConfigError("need at least one copy")
    sigma = window.std()
    eps = rng.standard_normal((n_copies,) + window.shape)
    return window[None, ...] + noise_scale * sigma * eps
