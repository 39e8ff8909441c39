"""Iterated bridge-regression training of the drift network.

Each update draws a mini-batch of paths, maps their grid observations
through the endpoint transport implied by the frozen network of the current
outer iteration (the transport starts as the identity: a fresh network has
an exactly zero output head), samples one pinned-bridge point per interval,
and regresses the live network's drift onto (Y_right - Y_t)/(t_right - t).
The per-interval context is the live encoder applied to the transported
history up to the interval's left endpoint; the frozen transport's context
is the frozen encoder applied to the raw history, with the right endpoint
mapped using the history up to the left endpoint.

An "epoch" is one mini-batch Adam update, matching the draw/compute/update
cycle of the training loop; ``n_epoch`` updates run per outer iteration,
after which the frozen transport is refreshed from the live parameters.

Training times are drawn uniformly per interval; by default they are
restricted to [t_i, t_{i+1} - xi_frac*dt_i], which bounds the
1/(t_right - t) factor in the regression target (the same end offset the
generator uses when it inverts the transport map). Set
``clamp_training_times=False`` to sample on the full half-open interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError
from ..numerics import AdamState, adam_step, backward, no_grad
from ..numerics import tensor as T
from ..series import TimeGrid, TimeSeriesDataset
from ..stochastic import RandomSource, brownian_bridge_values
from .config import GeneratorConfig
from .network import DriftNet


def transport_endpoints(
    values: np.ndarray,
    grid: TimeGrid,
    frozen: DriftNet | None,
    beta: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Map raw paths through the frozen endpoint transport.

    values: [B, n+1, d]. Returns (y_left [B, n, d], y_right [B, n, d]):
    left endpoints of every interval (history up to and including t_i maps
    t_i) and right endpoints (t_{i+1} mapped with the context of the
    history up to t_i). ``frozen=None`` means the identity transport.
    """
    n = grid.n_intervals
    x_left = values[:, :n, :]
    x_right = values[:, 1:, :]
    if frozen is None:
        return x_left.copy(), x_right.copy()
    with no_grad():
        ctx = frozen.encode(x_left).data  # [B, n, D]; position i sees tokens <= i
        t_left = grid.dates[:n, None]
        t_right = grid.dates[1:, None]
        s_left = frozen.drift(t_left, x_left, ctx).data
        s_right = frozen.drift(t_right, x_right, ctx).data
    return x_left - s_left / beta, x_right - s_right / beta


def _loss_for_draws(
    values: np.ndarray,
    grid: TimeGrid,
    net: DriftNet,
    frozen: DriftNet | None,
    config: GeneratorConfig,
    beta: float,
    u: np.ndarray,
    z: np.ndarray,
):
    """Loss tensor plus per-path float contributions for given draws.

    ``u`` [B, n] are uniform(0,1) variates that place the regression time
    inside each interval; ``z`` [B, n, d] are the bridge normals. Keeping
    the draws explicit makes the loss a deterministic function of
    (paths, draws), so permuting paths together with their draws changes
    nothing but float summation order.
    """
    batch, _, dim = values.shape
    n = grid.n_intervals
    y_left, y_right = transport_endpoints(values, grid, frozen, beta)

    t_l = grid.dates[:n]
    t_r = grid.dates[1:]
    deltas = grid.deltas
    span = (1.0 - config.xi_frac) * deltas if config.clamp_training_times else deltas
    t = t_l + u * span  # [B, n]
    y_t = brownian_bridge_values(
        y_left, y_right, t_l[:, None], t_r[:, None], t[..., None], z
    )
    target = (y_right - y_t) / (t_r[:, None] - t[..., None])

    ctx = net.encode(y_left)  # [B, n, D], gradients flow into the encoder
    pred = net.drift(t[..., None], y_t, ctx)
    resid = T.sub(pred, target)
    loss = T.scale(T.tsum(T.square(resid)), 1.0 / (batch * n))
    per_path = np.square(resid.data).sum(axis=(1, 2)) / n
    return loss, per_path


def compute_loss_batch(
    values: np.ndarray,
    grid: TimeGrid,
    net: DriftNet,
    frozen: DriftNet | None,
    config: GeneratorConfig,
    rng: RandomSource,
):
    """One stochastic estimate of the training loss on a batch of paths.

    Returns (loss tensor, loss value); the value is the compensated sum of
    per-path contributions divided by the batch size, invariant under path
    permutation up to float rounding.
    """
    config.validate(grid)
    beta = config.resolved_beta(grid)
    batch, _, dim = values.shape
    n = grid.n_intervals
    u = rng.uniform(size=(batch, n))
    z = rng.normal(size=(batch, n, dim))
    loss, per_path = _loss_for_draws(values, grid, net, frozen, config, beta, u, z)
    return loss, math.fsum(per_path) / batch


@dataclass
class TrainResult:
    net: DriftNet
    trace: list[tuple[int, int, float]] = field(default_factory=list)  # (outer, epoch, loss)

    def losses(self) -> np.ndarray:
        return np.array([row[2] for row in self.trace])


def train_on_values(
    values: np.ndarray,
    grid: TimeGrid,
    config: GeneratorConfig,
    rng: RandomSource,
    initial_net: DriftNet | None = None,
) -> TrainResult:
    """Run ``n_outer`` frozen-transport iterations of ``n_epoch`` updates each.

    With ``initial_net`` the run resumes from existing parameters; the first
    frozen transport is then that network rather than the identity.
    """
    config.validate(grid)
    values = np.asarray(values, dtype=np.float64)
    n_paths, _, dim = values.shape
    if n_paths < 1:
        raise TrainingError("empty training set")
    beta = config.resolved_beta(grid)

    init_rng, loop_rng = rng.spawn(2)
    if initial_net is None:
        net = DriftNet(dim, config.d_model, config.n_head, config.ffn_ratio,
                       init_rng.generator, zero_head=True)
        frozen: DriftNet | None = None  # identity transport at the first iteration
    else:
        net = initial_net
        frozen = None if config.sb_mode else net.clone()
    state = AdamState(lr=config.lr)
    trace: list[tuple[int, int, float]] = []

    for outer in range(config.n_outer):
        for epoch in range(config.n_epoch):
            idx = loop_rng.choice(
                n_paths, size=config.batch_size, replace=n_paths < config.batch_size
            )
            loss, value = compute_loss_batch(
                values[idx], grid, net, frozen, config, loop_rng
            )
            if not np.isfinite(value):
                raise TrainingError(
                    f"non-finite loss at outer iteration {outer}, epoch {epoch}"
                )
            net.zero_grad()
            backward(loss)
            adam_step(net.params, state)
            trace.append((outer, epoch, value))
        if not config.sb_mode:
            frozen = net.clone()
    return TrainResult(net=net, trace=trace)


def train(dataset: TimeSeriesDataset, config: GeneratorConfig, rng: RandomSource) -> TrainResult:
    return train_on_values(dataset.values, dataset.grid, config, rng)
