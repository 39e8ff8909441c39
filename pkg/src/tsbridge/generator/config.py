"""Generator hyperparameters and their validation.

Defaults follow the reference experimental setup: 5 outer iterations, 1000
inner updates per outer iteration, batch 128, lr 1e-3, d_model 128 with 16
heads, 50 Euler steps per interval, and an end-of-interval offset fraction
of 0.01 (an evaluation horizon of 0.99 on a unit interval). The offset is
defined per interval, so non-uniform grids rescale it automatically.

``beta`` controls the strength of the endpoint transport map and is defined
in the units of the (scaled) training data; it is not scale-invariant. When
left unset it resolves to 10/min_i(dt_i), which keeps beta*dt_i above the
required lower bound of 1 with a wide margin. ``sb_mode`` drops the
transport map entirely (the drift-only limit), in which case the beta bound
is not enforced.

``clamp_training_times`` also applies the end offset while drawing training
times, bounding the 1/(t_right - t) regression target; disable it to sample
times on the full half-open interval.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..errors import ConfigError
from ..series import TimeGrid


@dataclass
class GeneratorConfig:
    beta: float | None = None
    n_outer: int = 5
    n_epoch: int = 1000
    batch_size: int = 128
    lr: float = 1e-3
    d_model: int = 128
    n_head: int = 16
    ffn_ratio: int = 4  # encoder feed-forward expansion; unspecified upstream
    n_pi: int = 50
    xi_frac: float = 0.01
    sb_mode: bool = False
    clamp_training_times: bool = True
    reference_vol_noise: bool = False

    def resolved_beta(self, grid: TimeGrid) -> float:
        if self.beta is not None:
            return float(self.beta)
        return 10.0 / float(grid.deltas.min())

    def validate(self, grid: TimeGrid | None = None):
        if self.n_outer < 1:
            raise ConfigError(f"n_outer must be >= 1, got {self.n_outer}")
        if self.n_epoch < 1 or self.batch_size < 1:
            raise ConfigError("n_epoch and batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.n_pi < 1:
            raise ConfigError(f"n_pi must be >= 1, got {self.n_pi}")
        if not 0.0 < self.xi_frac < 1.0:
            raise ConfigError(f"xi_frac must lie in (0, 1), got {self.xi_frac}")
        if self.d_model < 2:
            raise ConfigError("d_model must be >= 2")
        if self.d_model % self.n_head != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by n_head={self.n_head}"
            )
        if self.ffn_ratio < 1:
            raise ConfigError("ffn_ratio must be >= 1")
        if grid is not None and not self.sb_mode:
            beta = self.resolved_beta(grid)
            if beta <= 0:
                raise ConfigError(f"beta must be > 0, got {beta}")
            min_dt = float(grid.deltas.min())
            if beta * min_dt <= 1.0:
                raise ConfigError(
                    f"beta*dt must exceed 1 on every interval: "
                    f"beta={beta}, min dt={min_dt}"
                )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)
