"""Time grids, path datasets, and their CSV serialization.

A dataset holds M sample paths observed at the n+1 dates of a shared grid,
each observation a d-vector. CSV layout (one row per observation):

    path_id,date_index,<dim_0>,...,<dim_{d-1}>

``path_id`` runs 0..M-1 and ``date_index`` 0..n within each path; readers
reject files that deviate from this layout instead of guessing.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, SchemaError


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing observation dates t_0 < ... < t_n."""

    dates: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype=np.float64)
        object.__setattr__(self, "dates", dates)
        if dates.ndim != 1 or dates.size < 2:
            raise ConfigError("grid needs at least two dates")
        if not np.all(np.diff(dates) > 0):
            raise ConfigError("grid dates must be strictly increasing")

    @classmethod
    def uniform(cls, n_intervals: int, horizon: float = 1.0) -> "TimeGrid":
        if n_intervals < 1:
            raise ConfigError("need at least one interval")
        return cls(np.linspace(0.0, horizon, n_intervals + 1))

    @property
    def n_intervals(self) -> int:
        return self.dates.size - 1

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.dates)

    def digest(self) -> str:
        return hashlib.sha256(self.dates.tobytes()).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.dates, other.dates)


@dataclass
class TimeSeriesDataset:
    """M paths x (n+1) dates x d dims on a shared grid."""

    values: np.ndarray  # [M, n+1, d]
    grid: TimeGrid
    dim_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise DataError(f"expected [paths, dates, dims] values, got shape {self.values.shape}")
        if self.values.shape[1] != self.grid.dates.size:
            raise DataError(
                f"{self.values.shape[1]} dates in values vs {self.grid.dates.size} grid dates"
            )
        if not self.dim_names:
            self.dim_names = [f"y{i}" for i in range(self.values.shape[2])]
        if len(self.dim_names) != self.values.shape[2]:
            raise DataError("one dim name per value dimension required")

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def increments(self) -> np.ndarray:
        """Per-interval differences, shape [M, n, d]."""
        return np.diff(self.values, axis=1)


def format_float(x: float) -> str:
    """Shortest round-trip decimal form; deterministic across runs."""
    return repr(float(x))


def write_paths_csv(path, dataset: TimeSeriesDataset):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id", "date_index"] + list(dataset.dim_names))
        for m in range(dataset.n_paths):
            for i in range(dataset.grid.dates.size):
                writer.writerow(
                    [m, i] + [format_float(v) for v in dataset.values[m, i]]
                )


def read_paths_csv(path, grid: TimeGrid | None = None) -> TimeSeriesDataset:
    """Read a paths CSV; the model-time grid defaults to uniform on [0, 1]."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        if header[:2] != ["path_id", "date_index"] or len(header) < 3:
            raise SchemaError(
                f"{path}: expected header path_id,date_index,<dims>, got {header!r}"
            )
        dim_names = header[2:]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no observations")
    arr = np.asarray(rows, dtype=np.float64)
    path_ids = arr[:, 0].astype(np.int64)
    date_idx = arr[:, 1].astype(np.int64)
    n_paths = int(path_ids.max()) + 1
    n_dates = int(date_idx.max()) + 1
    if arr.shape[0] != n_paths * n_dates:
        raise SchemaError(f"{path}: ragged paths; expected {n_paths}x{n_dates} rows")
    order = np.lexsort((date_idx, path_ids))
    arr = arr[order]
    expected_pid = np.repeat(np.arange(n_paths), n_dates)
    expected_did = np.tile(np.arange(n_dates), n_paths)
    if not (np.array_equal(arr[:, 0], expected_pid) and np.array_equal(arr[:, 1], expected_did)):
        raise SchemaError(f"{path}: path_id/date_index must cover a full grid")
    values = arr[:, 2:].reshape(n_paths, n_dates, len(dim_names))
    if grid is None:
        grid = TimeGrid.uniform(n_dates - 1)
    return TimeSeriesDataset(values=values, grid=grid, dim_names=dim_names)


def write_table_csv(path, header: list[str], rows):
    """Write a generic CSV table with deterministic float formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_float(v) if isinstance(v, float) else v for v in row]
            )


def read_table_csv(path, expected_header: list[str]) -> np.ndarray:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected_header:
            raise SchemaError(f"{path}: expected header {expected_header}, got {header}")
        rows = [[float(v) for v in row] for row in reader]
    return np.asarray(rows, dtype=np.float64)
