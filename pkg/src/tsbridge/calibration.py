"""Heston parameter recovery from observed (X, v) paths.

Quasi-maximum likelihood on Euler transitions, profiled in closed form:

* drift rate ``r``: no-intercept regression of dX/(X sqrt(v dt)) on
  sqrt(dt/v);
* ``kappa, theta``: weighted least squares of dv on (dt, -v dt) with
  weights 1/v, the exact argmax of the v-equation Gaussian quasi-likelihood;
* ``xi_vol``: root mean square of the v-equation residuals standardized by
  sqrt(v dt);
* ``rho``: Pearson correlation of the standardized residual pairs.

The left-endpoint variance enters every standardization; non-positive
observations are floored at 1e-8 with a warning and counted. Estimates are
clipped into the admissible set (kappa, theta, xi >= 0; |rho| <= 1) with
clip counters so downstream histograms never contain invalid values.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, EstimationError

V_FLOOR = 1e-8
MIN_PATH_LENGTH = 10

PARAM_NAMES = ["kappa", "theta", "xi_vol", "rho", "r"]


@dataclass
class HestonFit:
    kappa: float
    theta: float
    xi_vol: float
    rho: float
    r: float
    clipped: dict = field(default_factory=dict)
    floored_v: int = 0
    degenerate_rho: bool = False

    def as_vector(self) -> np.ndarray:
        return np.array([self.kappa, self.theta, self.xi_vol, self.rho, self.r])


def heston_qmle(x: np.ndarray, v: np.ndarray, dt: float) -> HestonFit:
    """Fit Heston parameters to one observed (X, v) path.

    ``x`` and ``v`` are the level and variance series at the observation
    dates; ``dt`` is the real-time spacing between observations.
    """
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if x.shape != v.shape or x.ndim != 1:
        raise DataError("x and v must be 1-D series of equal length")
    if x.size < MIN_PATH_LENGTH:
        raise DataError(f"need at least {MIN_PATH_LENGTH} observations, got {x.size}")
    if not (np.isfinite(x).all() and np.isfinite(v).all()):
        raise DataError("non-finite observations")
    if np.any(x[:-1] <= 0.0):
        # the multiplicative-noise standardization dX/(X sqrt(v dt))
        # presumes positive price levels
        raise EstimationError("r: non-positive price level on the path")

    floored = int(np.count_nonzero(v[:-1] <= 0.0))
    if floored:
        warnings.warn(f"{floored} non-positive variance observations floored at {V_FLOOR}",
                      stacklevel=2)
    v_left = np.maximum(v[:-1], V_FLOOR)
    x_left = x[:-1]
    dx = np.diff(x)
    dv = np.diff(v)
    n = dx.size

    # r: regression of dX/(X sqrt(v dt)) on sqrt(dt/v), no intercept
    u = dx / (x_left * np.sqrt(v_left * dt))
    w = np.sqrt(dt / v_left)
    r_hat = float(np.sum(u * w) / np.sum(w * w))
    eps_x = u - r_hat * w

    # kappa, theta: WLS of dv on (dt, -v dt) with weights 1/v
    s_inv = np.sum(1.0 / v_left)
    s_v = np.sum(v_left)
    det = s_inv * s_v - n * n
    if det <= 1e-12 * s_inv * s_v:
        raise EstimationError("kappa/theta: variance series is constant")
    sum_dv = np.sum(dv)
    sum_dv_over_v = np.sum(dv / v_left)
    a_hat = (s_v * sum_dv_over_v - n * sum_dv) / (dt * det)
    b_hat = (n * sum_dv_over_v - s_inv * sum_dv) / (dt * det)

    resid = dv - (a_hat - b_hat * v_left) * dt
    xi_hat = float(np.sqrt(np.mean(resid**2 / (v_left * dt))))

    degenerate_rho = xi_hat < 1e-12
    if degenerate_rho:
        rho_hat = 0.0
    else:
        eps_v = resid / (xi_hat * np.sqrt(v_left * dt))
        denom = eps_x.std() * eps_v.std()
        if denom < 1e-300:
            rho_hat, degenerate_rho = 0.0, True
        else:
            rho_hat = float(np.corrcoef(eps_x, eps_v)[0, 1])

    kappa_raw = float(b_hat)
    theta_raw = float(a_hat / b_hat) if b_hat != 0.0 else math.inf

    clipped = {}
    kappa = max(kappa_raw, 0.0)
    if kappa != kappa_raw:
        clipped["kappa"] = kappa_raw
    theta = theta_raw if math.isfinite(theta_raw) else 0.0
    theta = max(theta, 0.0)
    if theta != theta_raw:
        clipped["theta"] = theta_raw
    xi_vol = max(xi_hat, 0.0)
    rho = min(max(rho_hat, -1.0), 1.0)
    if rho != rho_hat:
        clipped["rho"] = rho_hat

    return HestonFit(
        kappa=kappa, theta=theta, xi_vol=xi_vol, rho=rho, r=r_hat,
        clipped=clipped, floored_v=floored, degenerate_rho=degenerate_rho,
    )


@dataclass
class CalibrationResult:
    """Per-path estimates for one dataset plus aggregate diagnostics."""

    estimates: np.ndarray  # [n_fitted, 5] columns PARAM_NAMES
    n_paths: int
    skipped: int
    skip_reasons: list[str] = field(default_factory=list)
    clip_counts: dict = field(default_factory=dict)
    floored_v_total: int = 0

    def summary(self) -> dict:
        out = {"n_paths": self.n_paths, "n_fitted": int(self.estimates.shape[0]),
               "skipped": self.skipped, "clip_counts": dict(self.clip_counts),
               "floored_v_total": self.floored_v_total}
        for j, name in enumerate(PARAM_NAMES):
            col = self.estimates[:, j] if self.estimates.size else np.array([])
            out[name] = {
                "mean": float(col.mean()) if col.size else math.nan,
                "std": float(col.std()) if col.size else math.nan,
            }
        return out


def calibrate_dataset(values: np.ndarray, dt: float) -> CalibrationResult:
    """Fit every (X, v) path of ``values`` [M, L, 2]; failures become skips."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3 or values.shape[2] != 2:
        raise DataError(f"expected [paths, dates, 2] (X, v) values, got {values.shape}")
    rows = []
    skip_reasons: list[str] = []
    clip_counts: dict = {}
    floored = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for m in range(values.shape[0]):
            try:
                fit = heston_qmle(values[m, :, 0], values[m, :, 1], dt)
            except (DataError, EstimationError) as exc:
                skip_reasons.append(f"path {m}: {exc}")
                continue
            rows.append(fit.as_vector())
            floored += fit.floored_v
            for key in fit.clipped:
                clip_counts[key] = clip_counts.get(key, 0) + 1
    estimates = np.asarray(rows).reshape(len(rows), 5)
    return CalibrationResult(
        estimates=estimates,
        n_paths=values.shape[0],
        skipped=len(skip_reasons),
        skip_reasons=skip_reasons,
        clip_counts=clip_counts,
        floored_v_total=floored,
    )


def shared_histograms(results: dict[str, CalibrationResult], bins: int = 30) -> dict:
    """Per-parameter histograms over bin edges shared across sources."""
    out: dict = {}
    for j, name in enumerate(PARAM_NAMES):
        cols = {
            src: res.estimates[:, j]
            for src, res in results.items()
            if res.estimates.size
        }
        if not cols:
            out[name] = {"edges": [], "counts": {src: [] for src in results}}
            continue
        lo = min(float(c.min()) for c in cols.values())
        hi = max(float(c.max()) for c in cols.values())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
        out[name] = {
            "edges": edges.tolist(),
            "counts": {
                src: np.histogram(col, bins=edges)[0].tolist()
                for src, col in cols.items()
            },
        }
    return out


def dispersion_comparison(results: dict[str, CalibrationResult]) -> dict:
    """Cross-path standard deviations per parameter and the collapse flag.

    ``sb_collapse_detected`` is set when the drift-only baseline's xi_vol
    dispersion is below half of the full model's, the quantitative form of
    the vol-of-vol collapse the baseline is expected to exhibit.
    """
    stds = {
        src: {name: float(res.estimates[:, j].std()) if res.estimates.size else math.nan
              for j, name in enumerate(PARAM_NAMES)}
        for src, res in results.items()
    }
    out: dict = {"std": stds}
    if "sbbts" in stds and "sb_mode" in stds:
        xi_full = stds["sbbts"]["xi_vol"]
        xi_sb = stds["sb_mode"]["xi_vol"]
        out["xi_vol_std_ratio"] = xi_full / xi_sb if xi_sb > 0 else math.inf
        out["rho_std_ratio"] = (
            stds["sbbts"]["rho"] / stds["sb_mode"]["rho"]
            if stds["sb_mode"]["rho"] > 0 else math.inf
        )
        out["sb_collapse_detected"] = bool(xi_sb < 0.5 * xi_full)
    return out
