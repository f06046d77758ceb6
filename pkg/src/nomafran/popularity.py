"""Synthetic popularity / mobility time series and windowed datasets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError

TRAIN_FRACTION = 0.7


@dataclass(frozen=True)
class PopularitySeries:
    """Popularity of each content per slot, shape (T, F), entries in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DatasetError(f"expected a non-empty (T, F) matrix, got shape {v.shape}")
        if np.any(v < 0) or np.any(v > 1):
            raise DatasetError("popularity values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def n_slots(self) -> int:
        return self.values.shape[0]

    @property
    def n_contents(self) -> int:
        return self.values.shape[1]

    def column(self, t: int) -> np.ndarray:
        """Popularity vector over contents at slot ``t``."""
        return self.values[t]

    def content(self, f: int) -> np.ndarray:
        return self.values[:, f]


def random_walk_series(T, F=1, step_bound=0.05, x0=0.5, seed=None, increments=None) -> PopularitySeries:
    """Clamped uniform random walk per content.

    ``x0`` may be a scalar or one start value per content.  ``increments``
    (shape ``(T-1, F)``) replaces the sampled steps; it exists so tests can
    drive the walk deterministically.
    """
    if T < 1:
        raise DatasetError("T must be >= 1")
    if step_bound <= 0:
        raise DatasetError("step_bound must be > 0")
    start = np.broadcast_to(np.asarray(x0, dtype=float), (F,)).copy()
    if np.any(start < 0) or np.any(start > 1):
        raise DatasetError("x0 must lie in [0, 1]")
    if increments is None:
        rng = np.random.default_rng(seed)
        increments = rng.uniform(-step_bound, step_bound, size=(T - 1, F))
    else:
        increments = np.asarray(increments, dtype=float).reshape(T - 1, F)
    values = np.empty((T, F))
    values[0] = start
    for t in range(1, T):
        values[t] = np.clip(values[t - 1] + increments[t - 1], 0.0, 1.0)
    return PopularitySeries(values)


def zipf_distribution(F: int, exponent: float) -> np.ndarray:
    if F < 1:
        raise DatasetError("F must be >= 1")
    if exponent < 0:
        raise DatasetError("Zipf exponent must be >= 0")
    weights = np.arange(1, F + 1, dtype=float) ** (-exponent)
    return weights / weights.sum()


def normalize_popularity(column) -> np.ndarray:
    """Turn a popularity column into a request distribution (uniform if all zero)."""
    col = np.asarray(column, dtype=float)
    total = col.sum()
    if total <= 0:
        return np.full(col.shape, 1.0 / col.size)
    return col / total


@dataclass(frozen=True)
class WindowedDataset:
    inputs: np.ndarray  # (N, W, d), unshuffled; pair k starts at slot k
    labels: np.ndarray  # (N, d)
    order: np.ndarray  # permutation of range(N)
    split_index: int

    @property
    def n_pairs(self) -> int:
        return len(self.labels)

    @property
    def window(self) -> int:
        return self.inputs.shape[1]

    @property
    def train(self):
        idx = self.order[:self.split_index]
        return self.inputs[idx], self.labels[idx]

    @property
    def test(self):
        idx = self.order[self.split_index:]
        return self.inputs[idx], self.labels[idx]

    def pairs(self):
        """(input, label) pairs in shuffled order."""
        return [(self.inputs[k], self.labels[k]) for k in self.order]


def window_dataset(series, W: int, shuffle_seed=None, train_fraction=TRAIN_FRACTION) -> WindowedDataset:
    """Slide a length-``W`` window over ``series`` (shape (T,) or (T, d), or a PopularitySeries)."""
    if isinstance(series, PopularitySeries):
        series = series.values
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    T = x.shape[0]
    if W < 1:
        raise DatasetError("window length must be >= 1")
    if T <= W:
        raise DatasetError(f"series of length {T} too short for window {W}")
    n = T - W
    inputs = np.stack([x[t:t + W] for t in range(n)])
    labels = x[W:W + n].copy()
    if shuffle_seed is None:
        order = np.arange(n)
    else:
        order = np.random.default_rng(shuffle_seed).permutation(n)
    return WindowedDataset(inputs, labels, order, int(math.floor(train_fraction * n)))


def mobility_series(ue_count, T, radius, step_sigma, seed=None, start=None) -> np.ndarray:
    """Gaussian 2-D random walks inside a disc, reflected at the boundary.

    Returns positions in metres, shape (T, ue_count, 2).  ``start`` defaults
    to uniform positions in the disc.
    """
    if step_sigma < 0:
        raise DatasetError("step_sigma must be >= 0")
    rng = np.random.default_rng(seed)
    if start is None:
        r = radius * np.sqrt(rng.random(ue_count))
        theta = 2 * np.pi * rng.random(ue_count)
        pos = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    else:
        pos = np.asarray(start, dtype=float).reshape(ue_count, 2).copy()
    out = np.empty((T, ue_count, 2))
    out[0] = pos
    for t in range(1, T):
        pos = _reflect_into_disc(pos + rng.normal(0.0, step_sigma, size=pos.shape), radius)
        out[t] = pos
    return out


def _reflect_into_disc(pos, radius):
    norm = np.linalg.norm(pos, axis=-1, keepdims=True)
    outside = norm > radius
    if not np.any(outside):
        return pos
    # mirror the overshoot back along the radius; steps longer than the
    # diameter fall back to a clamp on the boundary
    reflected_norm = np.clip(2 * radius - norm, 0.0, radius)
    scale = np.where(outside, reflected_norm / np.where(norm > 0, norm, 1.0), 1.0)
    return pos * scale


def normalize_positions(pos, radius):
    """Map metres in [-radius, radius] to [0, 1] per axis."""
    return (np.asarray(pos) + radius) / (2.0 * radius)


def denormalize_positions(norm_pos, radius):
    return np.asarray(norm_pos) * (2.0 * radius) - radius


def series_to_csv(series: PopularitySeries, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "content_id", "value"])
        for t in range(series.n_slots):
            for f in range(series.n_contents):
                w.writerow([t, f, repr(float(series.values[t, f]))])
