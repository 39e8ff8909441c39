"""Sequential path generation through the learned bridge diffusion.

Per interval, the current state is pushed through the endpoint transport,
the score-driven diffusion dY = s(t, Y, c) dt + dW is integrated with
``n_pi`` Euler steps, and the observable value is recovered by the inverse
transport evaluated at the offset time t_right - xi_frac*dt (the drift is
not well defined at the right endpoint itself). The interval context is the
encoder applied to the transported history up to the interval's left
endpoint; at the very first date the raw initial value plays that role.

Noise is drawn from one child stream per path, consumed interval by
interval, so (a) per-path parallelism cannot change results and (b) the
generated prefix up to any date is bit-identical under changes that only
affect later intervals (such as truncating or extending the grid).
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from ..numerics import no_grad
from ..series import TimeGrid
from ..stochastic import RandomSource
from .config import GeneratorConfig
from .network import DriftNet


def transport_map(x, t: float, context, net: DriftNet, beta: float,
                  sb_mode: bool = False) -> np.ndarray:
    """Forward endpoint transport y = x - s(t, x, c)/beta (identity in sb_mode)."""
    x = np.asarray(x, dtype=np.float64)
    if sb_mode:
        return x.copy()
    with no_grad():
        return x - net.drift(t, x, context).data / beta


def transport_inverse(y, t: float, context, net: DriftNet, beta: float,
                      sb_mode: bool = False) -> np.ndarray:
    """Inverse endpoint transport x = y + s(t, y, c)/beta (identity in sb_mode)."""
    y = np.asarray(y, dtype=np.float64)
    if sb_mode:
        return y.copy()
    with no_grad():
        return y + net.drift(t, y, context).data / beta


def sample_initial_values(values_t0: np.ndarray, n_paths: int, rng: RandomSource) -> np.ndarray:
    """Resample initial observations (rows) with replacement."""
    values_t0 = np.asarray(values_t0, dtype=np.float64)
    idx = rng.choice(values_t0.shape[0], size=n_paths, replace=True)
    return values_t0[idx]


def generate(
    net: DriftNet,
    config: GeneratorConfig,
    initial_values: np.ndarray,
    grid: TimeGrid,
    rng: RandomSource,
    sigma_roots: np.ndarray | None = None,
) -> np.ndarray:
    """Generate paths on ``grid`` starting from ``initial_values`` [M, d].

    Returns [M, n+1, d] in the units the network was trained on. With
    ``config.reference_vol_noise`` the Euler noise of interval i is shaped
    by ``sigma_roots[i]`` (a diagnostic knob; default off).
    """
    config.validate(grid)
    initial_values = np.asarray(initial_values, dtype=np.float64)
    if initial_values.ndim != 2:
        raise ContractError("initial_values must be [paths, dims]")
    n_paths, dim = initial_values.shape
    if dim != net.dim:
        raise ContractError(f"network trained on d={net.dim}, got initial values d={dim}")
    if config.reference_vol_noise and sigma_roots is None:
        raise ContractError("reference_vol_noise requires sigma_roots")
    beta = config.resolved_beta(grid) if not config.sb_mode else None
    n = grid.n_intervals
    streams = rng.spawn(n_paths)

    out = np.empty((n_paths, n + 1, dim))
    out[:, 0, :] = initial_values

    with no_grad():
        if config.sb_mode:
            y0 = initial_values.copy()
        else:
            c0 = net.context(initial_values[:, None, :]).data
            y0 = transport_map(initial_values, float(grid.dates[0]), c0, net, beta)
        y_hist = y0[:, None, :]

        for i in range(n):
            t_i = float(grid.dates[i])
            t_next = float(grid.dates[i + 1])
            dt_i = t_next - t_i
            h = dt_i / config.n_pi
            sqrt_h = np.sqrt(h)
            ctx = net.context(y_hist).data  # [M, D]

            z = np.empty((n_paths, config.n_pi, dim))
            for m, stream in enumerate(streams):
                z[m] = stream.normal(size=(config.n_pi, dim))
            if config.reference_vol_noise:
                z = z @ sigma_roots[i].T

            y = y_hist[:, -1, :].copy()
            for j in range(config.n_pi):
                t_j = t_i + j * h
                drift = net.drift(t_j, y, ctx).data
                y = y + drift * h + sqrt_h * z[:, j, :]

            if config.sb_mode:
                x_next = y
            else:
                t_eval = t_next - config.xi_frac * dt_i
                x_next = transport_inverse(y, t_eval, ctx, net, beta)
            out[:, i + 1, :] = x_next
            y_hist = np.concatenate([y_hist, y[:, None, :]], axis=1)

    return out
