"""Data scaling for training and per-interval reference volatilities.

The scaler standardizes path increments per dimension: it subtracts the
pooled training increment mean and divides by the pooled increment standard
deviation, rebuilding levels from the first observation (which passes
through unchanged). Dimensions with degenerate increment variance keep
scale 1 and shift 0, with a warning. The exact procedure is a local choice
kept behind this class so it can be swapped.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from ..series import TimeSeriesDataset

DEGENERATE_STD = 1e-12


@dataclass
class IncrementScaler:
    shift: np.ndarray  # [d]
    scale: np.ndarray  # [d]
    degenerate: np.ndarray = field(default=None)  # [d] bool

    def __post_init__(self):
        self.shift = np.asarray(self.shift, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        if self.degenerate is None:
            self.degenerate = np.zeros(self.shift.shape, dtype=bool)
        if np.any(self.scale <= 0):
            raise DataError("scaler scale must be positive in every dimension")

    @classmethod
    def fit(cls, values: np.ndarray) -> "IncrementScaler":
        """Fit on paths [M, n+1, d] using all pooled increments."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3 or values.shape[0] < 1:
            raise DataError("scaler needs a nonempty [paths, dates, dims] array")
        inc = np.diff(values, axis=1).reshape(-1, values.shape[2])
        shift = inc.mean(axis=0)
        scale = inc.std(axis=0)
        degenerate = scale < DEGENERATE_STD
        if degenerate.any():
            warnings.warn(
                f"zero-variance increment dimensions {np.flatnonzero(degenerate).tolist()}; "
                "scale pinned to 1",
                stacklevel=2,
            )
            shift = np.where(degenerate, 0.0, shift)
            scale = np.where(degenerate, 1.0, scale)
        return cls(shift=shift, scale=scale, degenerate=degenerate)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Standardize increments; initial levels pass through unchanged."""
        values = np.asarray(values, dtype=np.float64)
        inc = (np.diff(values, axis=-2) - self.shift) / self.scale
        out = np.empty_like(values)
        out[..., 0, :] = values[..., 0, :]
        np.cumsum(inc, axis=-2, out=out[..., 1:, :])
        out[..., 1:, :] += values[..., :1, :]
        return out

    def invert(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        inc = np.diff(values, axis=-2) * self.scale + self.shift
        out = np.empty_like(values)
        out[..., 0, :] = values[..., 0, :]
        np.cumsum(inc, axis=-2, out=out[..., 1:, :])
        out[..., 1:, :] += values[..., :1, :]
        return out

    def to_dict(self) -> dict:
        return {
            "shift": self.shift.tolist(),
            "scale": self.scale.tolist(),
            "degenerate": self.degenerate.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IncrementScaler":
        return cls(
            shift=np.asarray(data["shift"], dtype=np.float64),
            scale=np.asarray(data["scale"], dtype=np.float64),
            degenerate=np.asarray(data["degenerate"], dtype=bool),
        )


def fit_scaler(dataset: TimeSeriesDataset) -> IncrementScaler:
    return IncrementScaler.fit(dataset.values)


def reference_volatility(dataset: TimeSeriesDataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-interval increment covariances and their PSD square roots.

    Returns (covs [n, d, d], roots [n, d, d]) where roots[i] is the
    symmetric PSD square root of covs[i] computed by eigendecomposition.
    Covariances use the population (1/M) convention. Singular directions
    contribute zero to the root, with a warning.
    """
    if dataset.n_paths < 2:
        raise DataError("reference volatility needs at least 2 paths")
    inc = dataset.increments()  # [M, n, d]
    n = inc.shape[1]
    d = inc.shape[2]
    covs = np.empty((n, d, d))
    roots = np.empty((n, d, d))
    warned = False
    for i in range(n):
        x = inc[:, i, :] - inc[:, i, :].mean(axis=0)
        cov = (x.T @ x) / x.shape[0]
        covs[i] = cov
        eigvals, eigvecs = np.linalg.eigh(cov)
        tiny = 1e-14 * max(1.0, float(eigvals.max(initial=0.0)))
        singular = eigvals < tiny
        if singular.any() and not warned:
            warnings.warn(
                f"singular increment covariance directions at interval {i}; "
                "their volatility contribution is 0",
                stacklevel=2,
            )
            warned = True
        clipped = np.where(singular, 0.0, eigvals)
        roots[i] = (eigvecs * np.sqrt(clipped)) @ eigvecs.T
    return covs, roots
