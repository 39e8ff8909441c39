"""Random sources and stochastic-process kernels.

Gaussian pinned-bridge sampling, the Euler-Maruyama step used to integrate
the score-driven diffusion, and a Heston simulator with full-truncation
Euler for the variance leg. All samplers are pure functions of their inputs
and a splittable random source, so path-level parallelism cannot change
results versus sequential execution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .series import TimeGrid, TimeSeriesDataset

HESTON_DIM_NAMES = ["X", "v"]

# parameter boxes used to draw heterogeneous training sets (overridable)
DEFAULT_HESTON_RANGES = {
    "kappa": (0.5, 4.0),
    "theta": (0.5, 1.5),
    "xi_vol": (0.1, 0.9),
    "rho": (-0.9, 0.9),
    "r": (0.01, 0.1),
}


class RandomSource:
    """Seeded random stream with deterministic child-spawning.

    Same seed, same call sequence: bit-identical samples. ``spawn`` derives
    independent child streams (one per path, per epoch, ...) whose output
    does not depend on when or where they are consumed.
    """

    def __init__(self, seed: int | np.random.SeedSequence):
        if isinstance(seed, np.random.SeedSequence):
            self.seed_seq = seed
        else:
            self.seed_seq = np.random.SeedSequence(int(seed))
        self.generator = np.random.default_rng(self.seed_seq)

    def spawn(self, n: int) -> list["RandomSource"]:
        return [RandomSource(ss) for ss in self.seed_seq.spawn(n)]

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self.generator.integers(low, high, size=size)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)


def brownian_bridge_values(y_left, y_right, t_left, t_right, t, z):
    """Pinned-bridge values at interior times, given standard normals ``z``.

    Arrays broadcast elementwise:
        y_t = w_l*y_left + w_r*y_right + sigma_t*z
        sigma_t^2 = (t - t_left)(t_right - t)/(t_right - t_left)
    """
    y_left = np.asarray(y_left, dtype=np.float64)
    y_right = np.asarray(y_right, dtype=np.float64)
    span = t_right - t_left
    w_right = (t - t_left) / span
    w_left = 1.0 - w_right
    sigma = np.sqrt((t - t_left) * (t_right - t) / span)
    return w_left * y_left + w_right * y_right + sigma * z


def sample_brownian_bridge(
    y_left: np.ndarray,
    y_right: np.ndarray,
    t_left: float,
    t_right: float,
    t: float,
    rng: RandomSource,
) -> np.ndarray:
    """Draw the bridge pinned at (t_left, y_left) and (t_right, y_right) at time t."""
    if not (t_left <= t < t_right):
        raise DomainError(f"need t_left <= t < t_right, got t={t} on [{t_left}, {t_right})")
    y_left = np.asarray(y_left, dtype=np.float64)
    z = rng.normal(size=y_left.shape)
    return brownian_bridge_values(y_left, y_right, t_left, t_right, t, z)


def euler_maruyama_step(y, t, dt, drift_fn, context, rng: RandomSource):
    """One Euler-Maruyama step with unit diffusion:

        y + drift_fn(t, y, context)*dt + sqrt(dt)*Z,  Z ~ N(0, I).
    """
    if dt <= 0:
        raise DomainError(f"dt must be > 0, got {dt}")
    y = np.asarray(y, dtype=np.float64)
    drift = np.asarray(drift_fn(t, y, context), dtype=np.float64)
    return y + drift * dt + np.sqrt(dt) * rng.normal(size=y.shape)


@dataclass(frozen=True)
class HestonParams:
    kappa: float
    theta: float
    xi_vol: float
    rho: float
    r: float
    v0: float

    def __post_init__(self):
        if self.kappa <= 0 or self.theta <= 0 or self.xi_vol <= 0 or self.v0 <= 0:
            raise DomainError("kappa, theta, xi_vol, v0 must be > 0")
        if not -1.0 < self.rho < 1.0:
            raise DomainError(f"rho must lie strictly inside (-1, 1), got {self.rho}")


def _heston_paths(
    kappa, theta, xi_vol, rho, r, v0, x0, n_steps: int, dt: float, noise: np.ndarray
) -> np.ndarray:
    """Vectorized full-truncation Euler; parameters broadcast over paths.

    ``noise`` has shape [n_paths, n_steps, 2]; returns [n_paths, n_steps+1, 2].
    The variance state may dip below zero, but only its positive part is
    ever used under a square root or in the mean-reversion drift.
    """
    n_paths = noise.shape[0]
    out = np.empty((n_paths, n_steps + 1, 2))
    x = np.broadcast_to(np.asarray(x0, dtype=np.float64), (n_paths,)).copy()
    v = np.broadcast_to(np.asarray(v0, dtype=np.float64), (n_paths,)).copy()
    out[:, 0, 0] = x
    out[:, 0, 1] = v
    sq_dt = np.sqrt(dt)
    rho_c = np.sqrt(1.0 - rho**2)
    for k in range(n_steps):
        z_x = noise[:, k, 0]
        z_v = rho * z_x + rho_c * noise[:, k, 1]
        v_plus = np.maximum(v, 0.0)
        sqrt_v = np.sqrt(v_plus)
        x = x + r * x * dt + sqrt_v * x * sq_dt * z_x
        v = v + kappa * (theta - v_plus) * dt + xi_vol * sqrt_v * sq_dt * z_v
        out[:, k + 1, 0] = x
        out[:, k + 1, 1] = v
    return out


def simulate_heston(
    params: HestonParams, n_steps: int, dt: float, x0: float, rng: RandomSource
) -> np.ndarray:
    """Simulate one (X, v) path of ``n_steps`` Euler steps; shape [n_steps+1, 2]."""
    if dt <= 0:
        raise DomainError(f"dt must be > 0, got {dt}")
    if x0 <= 0:
        raise DomainError(f"x0 must be > 0, got {x0}")
    noise = rng.normal(size=(1, n_steps, 2))
    return _heston_paths(
        params.kappa, params.theta, params.xi_vol, params.rho, params.r,
        params.v0, x0, n_steps, dt, noise,
    )[0]


def sample_heston_dataset(
    n_paths: int,
    length: int,
    dt: float,
    rng: RandomSource,
    ranges: dict | None = None,
    x0: float = 1.0,
    substeps: int = 1,
    v0_mode: str = "theta",
) -> tuple[TimeSeriesDataset, list[HestonParams]]:
    """Draw ``n_paths`` Heston paths under heterogeneous parameters.

    Each path's (kappa, theta, xi_vol, rho, r) is drawn uniformly from the
    configured boxes using that path's own child stream, so the dataset is
    reproducible under path-level parallelism. ``v0`` is the drawn ``theta``
    by default; ``v0_mode="stationary"`` draws it from the variance
    process's stationary gamma law instead (floored at theta/10). ``length``
    counts observation dates, spaced ``dt`` apart; ``substeps`` Euler steps
    are taken per observation interval (> 1 shrinks discretization error
    when ``dt`` is coarse). The model-time grid is uniform on [0, 1].
    """
    if n_paths < 1:
        raise ConfigError("need at least one path")
    if length < 2:
        raise ConfigError("need at least two dates per path")
    if substeps < 1:
        raise ConfigError("substeps must be >= 1")
    if v0_mode not in ("theta", "stationary"):
        raise ConfigError(f"unknown v0_mode {v0_mode!r}")
    boxes = dict(DEFAULT_HESTON_RANGES)
    if ranges:
        unknown = set(ranges) - set(boxes)
        if unknown:
            raise ConfigError(f"unknown Heston range keys: {sorted(unknown)}")
        boxes.update(ranges)
    for name, (lo, hi) in boxes.items():
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
            raise ConfigError(f"invalid range for {name}: [{lo}, {hi}]")

    n_steps = (length - 1) * substeps
    values = np.empty((n_paths, length, 2))
    truths: list[HestonParams] = []
    for m, child in enumerate(rng.spawn(n_paths)):
        draw = {k: float(child.uniform(lo, hi)) for k, (lo, hi) in boxes.items()}
        if v0_mode == "stationary":
            shape = 2.0 * draw["kappa"] * draw["theta"] / draw["xi_vol"] ** 2
            scale = draw["xi_vol"] ** 2 / (2.0 * draw["kappa"])
            v0 = max(float(child.generator.gamma(shape, scale)), 0.1 * draw["theta"])
        else:
            v0 = draw["theta"]
        params = HestonParams(v0=v0, **draw)
        truths.append(params)
        noise = child.normal(size=(1, n_steps, 2))
        fine = _heston_paths(
            params.kappa, params.theta, params.xi_vol, params.rho, params.r,
            params.v0, x0, n_steps, dt / substeps, noise,
        )[0]
        values[m] = fine[::substeps]
    grid = TimeGrid.uniform(length - 1)
    dataset = TimeSeriesDataset(values=values, grid=grid, dim_names=list(HESTON_DIM_NAMES))
    return dataset, truths


def heston_truth_rows(truths: list[HestonParams]) -> list[list]:
    return [
        [m, p.kappa, p.theta, p.xi_vol, p.rho, p.r, p.v0] for m, p in enumerate(truths)
    ]
