"""Bridge-diffusion generator: drift network, training, sampling, scaling."""

from dataclasses import dataclass

from ..series import TimeSeriesDataset
from ..stochastic import RandomSource
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import GeneratorConfig
from .network import DriftNet
from .sampling import generate, sample_initial_values, transport_inverse, transport_map
from .scaling import IncrementScaler, fit_scaler, reference_volatility
from .training import TrainResult, compute_loss_batch, train, train_on_values


@dataclass
class FitResult:
    checkpoint: Checkpoint
    trace: list


def fit_pipeline(
    dataset: TimeSeriesDataset, config: GeneratorConfig, rng: RandomSource
) -> FitResult:
    """Fit scaler + drift network on a dataset; bundle into a checkpoint.

    Training runs on increment-standardized values; initial observations
    pass through the scaler unchanged, so the stored initials are valid
    starting points in both raw and scaled units.
    """
    scaler = fit_scaler(dataset)
    scaled = scaler.apply(dataset.values)
    result = train_on_values(scaled, dataset.grid, config, rng)
    scaled_dataset = TimeSeriesDataset(
        values=scaled, grid=dataset.grid, dim_names=list(dataset.dim_names)
    )
    _, sigma_roots = reference_volatility(scaled_dataset)
    ckpt = Checkpoint(
        net=result.net,
        config=config,
        grid=dataset.grid,
        scaler=scaler,
        initial_values=dataset.values[:, 0, :].copy(),
        sigma_roots=sigma_roots,
        dim_names=list(dataset.dim_names),
    )
    return FitResult(checkpoint=ckpt, trace=result.trace)


def resume_pipeline(
    dataset: TimeSeriesDataset,
    ckpt: Checkpoint,
    rng: RandomSource,
    config: GeneratorConfig | None = None,
) -> FitResult:
    """Continue training a checkpointed network on a matching dataset.

    The dataset grid must hash-match the checkpoint's training grid; the
    checkpoint's scaler is reused so the parameters keep their units.
    """
    from ..errors import ConfigError

    if dataset.grid.digest() != ckpt.grid.digest():
        raise ConfigError(
            f"grid mismatch: dataset {dataset.grid.digest()} vs "
            f"checkpoint {ckpt.grid.digest()}"
        )
    config = config or ckpt.config
    scaled = ckpt.scaler.apply(dataset.values)
    result = train_on_values(scaled, dataset.grid, config, rng, initial_net=ckpt.net)
    new_ckpt = Checkpoint(
        net=result.net,
        config=config,
        grid=ckpt.grid,
        scaler=ckpt.scaler,
        initial_values=dataset.values[:, 0, :].copy(),
        sigma_roots=ckpt.sigma_roots,
        dim_names=list(dataset.dim_names),
    )
    return FitResult(checkpoint=new_ckpt, trace=result.trace)


def generate_dataset(
    ckpt: Checkpoint, n_paths: int, rng: RandomSource
) -> TimeSeriesDataset:
    """Resample initials, generate in scaled units, map back to data units."""
    init_rng, path_rng = rng.spawn(2)
    initials = sample_initial_values(ckpt.initial_values, n_paths, init_rng)
    scaled = generate(
        ckpt.net, ckpt.config, initials, ckpt.grid, path_rng,
        sigma_roots=ckpt.sigma_roots,
    )
    values = ckpt.scaler.invert(scaled)
    return TimeSeriesDataset(values=values, grid=ckpt.grid, dim_names=list(ckpt.dim_names))


__all__ = [
    "Checkpoint",
    "DriftNet",
    "FitResult",
    "GeneratorConfig",
    "IncrementScaler",
    "TrainResult",
    "compute_loss_batch",
    "fit_pipeline",
    "fit_scaler",
    "generate",
    "generate_dataset",
    "load_checkpoint",
    "reference_volatility",
    "resume_pipeline",
    "sample_initial_values",
    "save_checkpoint",
    "train",
    "train_on_values",
    "transport_inverse",
    "transport_map",
]
