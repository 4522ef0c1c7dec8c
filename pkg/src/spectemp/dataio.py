"""Dataset loading, normalization, chronological splits, and windowing.

Raw series are arrays shaped (N, L, D): N variables over L time steps with
D feature dimensions (CSV inputs always produce D = 1). Splits are
contiguous in time and normalization statistics always come from the
training split, so no information flows backwards from validation or test
data.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, ParameterError, ShapeError

__all__ = [
    "Dataset",
    "NormStats",
    "WindowSet",
    "load_csv",
    "save_csv",
    "compute_norm_stats",
    "normalize",
    "denormalize",
    "split",
    "make_windows",
    "synth_signed_groups",
    "persistence_baseline",
    "mae",
    "rmse",
    "dataset_manifest",
]


@dataclass(frozen=True)
class Dataset:
    """A named multivariate series plus optional side information."""

    values: np.ndarray              # (N, L, D)
    name: str = "dataset"
    adjacency: np.ndarray | None = None
    labels: np.ndarray | None = None      # per-variable group labels
    norm_method: str = "none"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3:
            raise ShapeError(f"values must be (N, L, D), got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def n_variables(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    @property
    def n_dims(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class NormStats:
    """Per-variable affine transform: normalized = (x - loc) / scale."""

    method: str                  # "zscore" | "minmax" | "none"
    loc: np.ndarray              # (N, 1, D)
    scale: np.ndarray            # (N, 1, D), strictly positive
    degenerate: tuple = ()       # variable indices whose scale was patched to 1


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def load_csv(path, layout: str = "time_major", impute: str | None = None,
             name: str | None = None) -> Dataset:
    """Parse a numeric CSV into a Dataset (D = 1).

    time_major: rows are time steps, columns variables; variable_major is
    the transpose. NaN/empty cells raise DataError unless impute="ffill",
    which forward-fills per variable (leading gaps take the first valid
    value).
    """
    if layout not in ("time_major", "variable_major"):
        raise ParameterError(f"unknown layout {layout!r}")
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            parsed = []
            for col_no, cell in enumerate(row, start=1):
                cell = cell.strip()
                if cell == "" or cell.lower() == "nan":
                    parsed.append(np.nan)
                    continue
                try:
                    parsed.append(float(cell))
                except ValueError:
                    if line_no == 1:
                        parsed = None  # header row
                        break
                    raise DataError(
                        f"{path}: line {line_no}, column {col_no}: "
                        f"non-numeric cell {cell!r}") from None
            if parsed is not None:
                rows.append((line_no, parsed))
    if not rows:
        raise DataError(f"{path}: no numeric rows")
    width = len(rows[0][1])
    for line_no, row in rows:
        if len(row) != width:
            raise DataError(f"{path}: line {line_no}: expected {width} columns,"
                            f" got {len(row)}")
    table = np.asarray([row for _, row in rows], dtype=np.float64)
    if layout == "time_major":
        table = table.T  # -> (N, L)
    if np.isnan(table).any():
        if impute != "ffill":
            var_idx, step_idx = np.nonzero(np.isnan(table))
            raise DataError(
                f"{path}: NaN at variable {int(var_idx[0])}, step {int(step_idx[0])};"
                f" pass impute='ffill' to fill forward")
        for i in range(table.shape[0]):
            series = table[i]
            valid = np.flatnonzero(~np.isnan(series))
            if valid.size == 0:
                raise DataError(f"{path}: variable {i} is entirely NaN")
            series[:valid[0]] = series[valid[0]]
            for t in range(1, series.size):
                if np.isnan(series[t]):
                    series[t] = series[t - 1]
    return Dataset(values=table[:, :, None],
                   name=name or os.path.splitext(os.path.basename(str(path)))[0])


def save_csv(dataset: Dataset, path, layout: str = "time_major") -> None:
    if dataset.n_dims != 1:
        raise ShapeError("CSV export supports D = 1 only")
    table = dataset.values[:, :, 0]
    if layout == "time_major":
        table = table.T
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for row in table:
            writer.writerow([repr(float(x)) for x in row])


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def compute_norm_stats(train: Dataset, method: str) -> NormStats:
    """Statistics from (what must be) the training split."""
    v = train.values
    degenerate = []
    if method == "zscore":
        loc = v.mean(axis=1, keepdims=True)
        scale = v.std(axis=1, keepdims=True)
    elif method == "minmax":
        loc = v.min(axis=1, keepdims=True)
        scale = v.max(axis=1, keepdims=True) - loc
    elif method == "none":
        loc = np.zeros((train.n_variables, 1, train.n_dims))
        scale = np.ones_like(loc)
    else:
        raise ParameterError(f"unknown normalization {method!r}")
    flat = scale.reshape(train.n_variables, -1)
    for i in range(train.n_variables):
        if np.any(flat[i] <= 1e-12):
            degenerate.append(i)
    scale = np.where(scale > 1e-12, scale, 1.0)
    return NormStats(method=method, loc=loc, scale=scale, degenerate=tuple(degenerate))


def normalize(dataset: Dataset, stats: NormStats) -> Dataset:
    values = (dataset.values - stats.loc) / stats.scale
    return replace(dataset, values=values, norm_method=stats.method)


def denormalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Map model-space values (..., N, T, D) back to the raw scale."""
    arr = np.asarray(values, dtype=np.float64)
    return arr * stats.scale + stats.loc


# ---------------------------------------------------------------------------
# splits and windows
# ---------------------------------------------------------------------------

def split(dataset: Dataset, ratios=(0.6, 0.2, 0.2)) -> tuple[Dataset, Dataset, Dataset]:
    """Chronological train/val/test split; lengths floor(L*r) with the
    remainder going to the last part."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ParameterError(f"ratios must be three nonnegative values summing to 1,"
                             f" got {ratios}")
    length = dataset.length
    n_train = int(length * ratios[0])
    n_val = int(length * ratios[1])
    parts = []
    bounds = [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, length)]
    for tag, (lo, hi) in zip(("train", "val", "test"), bounds):
        parts.append(replace(dataset, values=dataset.values[:, lo:hi, :],
                             name=f"{dataset.name}.{tag}"))
    return tuple(parts)


@dataclass(frozen=True)
class WindowSet:
    """Sliding forecasting windows: inputs (B, N, T, D), targets (B, N, H, D)."""

    inputs: np.ndarray
    targets: np.ndarray
    origins: np.ndarray  # (B,) start index of each input window

    @property
    def count(self) -> int:
        return self.inputs.shape[0]


def make_windows(dataset: Dataset, lookback: int, horizon: int,
                 stride: int = 1) -> WindowSet:
    if lookback < 1 or horizon < 1 or stride < 1:
        raise ParameterError("lookback, horizon, and stride must be positive")
    length = dataset.length
    count = (length - lookback - horizon) // stride + 1
    if count < 1:
        raise ParameterError(
            f"series of length {length} is too short for T={lookback}, H={horizon}")
    v = dataset.values
    inputs = np.stack([v[:, i * stride:i * stride + lookback, :]
                       for i in range(count)])
    targets = np.stack([v[:, i * stride + lookback:i * stride + lookback + horizon, :]
                        for i in range(count)])
    origins = np.arange(count) * stride
    return WindowSet(inputs=inputs, targets=targets, origins=origins)


# ---------------------------------------------------------------------------
# synthetic generator and baseline
# ---------------------------------------------------------------------------

def synth_signed_groups(n_per_group: int, length: int, noise_sigma: float = 0.1,
                        seed: int = 0, periods: int = 20) -> Dataset:
    """Two groups of oscillating series with a quarter-period offset.

    Group 0 follows a_i sin(2 pi * periods * t / length), group 1 follows
    b_i cos(...), amplitudes drawn uniformly from [0.5, 2.0], plus white
    noise of the given sigma. Labels mark group membership.
    """
    if n_per_group < 1 or length < 2:
        raise ParameterError("need at least one series per group and length >= 2")
    rng = np.random.default_rng(seed)
    phase = 2.0 * np.pi * periods * np.arange(length) / length
    amplitudes = rng.uniform(0.5, 2.0, size=2 * n_per_group)
    values = np.empty((2 * n_per_group, length, 1))
    for i in range(n_per_group):
        values[i, :, 0] = amplitudes[i] * np.sin(phase)
    for i in range(n_per_group, 2 * n_per_group):
        values[i, :, 0] = amplitudes[i] * np.cos(phase)
    values += noise_sigma * rng.standard_normal(values.shape)
    labels = np.repeat([0, 1], n_per_group)
    return Dataset(values=values, name="synth_signed_groups", labels=labels)


def persistence_baseline(windows: WindowSet) -> np.ndarray:
    """Repeat each window's last observation across the horizon."""
    last = windows.inputs[:, :, -1:, :]
    horizon = windows.targets.shape[2]
    return np.repeat(last, horizon, axis=2)


def mae(predicted: np.ndarray, actual: np.ndarray) -> float:
    predicted, actual = np.asarray(predicted), np.asarray(actual)
    if predicted.shape != actual.shape:
        raise ShapeError(f"shape mismatch {predicted.shape} vs {actual.shape}")
    return float(np.abs(predicted - actual).mean())


def rmse(predicted: np.ndarray, actual: np.ndarray) -> float:
    predicted, actual = np.asarray(predicted), np.asarray(actual)
    if predicted.shape != actual.shape:
        raise ShapeError(f"shape mismatch {predicted.shape} vs {actual.shape}")
    return float(np.sqrt(((predicted - actual) ** 2).mean()))


def dataset_manifest(dataset: Dataset, stats: NormStats | None = None,
                     ratios=None, seed: int | None = None) -> dict:
    manifest = {
        "name": dataset.name,
        "n_variables": dataset.n_variables,
        "length": dataset.length,
        "n_dims": dataset.n_dims,
        "normalization": stats.method if stats else dataset.norm_method,
    }
    if stats is not None and stats.degenerate:
        manifest["degenerate_variables"] = list(stats.degenerate)
    if ratios is not None:
        manifest["split_ratios"] = list(ratios)
    if seed is not None:
        manifest["seed"] = seed
    if dataset.labels is not None:
        manifest["labels"] = np.asarray(dataset.labels).tolist()
    return manifest
