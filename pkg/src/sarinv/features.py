"""Fixed multi-resolution image descriptor and feature-space utilities.

The descriptor of an image ``I`` is built from ``L = log(1 + I)``:

* 256 block means of ``L`` on a 16 x 16 grid,
* 16 block means on a 4 x 4 grid,
* the global mean and standard deviation of ``L``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

FEATURE_DIM = 274
FINE_GRID = 16
COARSE_GRID = 4


class FeatureError(ValueError):
    pass


def _pool(x: np.ndarray, g: int) -> np.ndarray:
    h, w = x.shape
    return x.reshape(g, h // g, g, w // g).mean(axis=(1, 3))


def extract(image) -> np.ndarray:
    """Descriptor of a :class:`SarImage` or a raw 2-D intensity grid."""
    grid = np.asarray(getattr(image, "intensity", image), dtype=float)
    if grid.ndim != 2 or grid.shape[0] % FINE_GRID or grid.shape[1] % FINE_GRID:
        raise FeatureError(f"image shape {grid.shape} not divisible into {FINE_GRID}x{FINE_GRID} blocks")
    log = np.log1p(grid)
    return np.concatenate([
        _pool(log, FINE_GRID).ravel(),
        _pool(log, COARSE_GRID).ravel(),
        [log.mean(), log.std()],
    ])


def feature_l1(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise FeatureError(f"feature length mismatch {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


@dataclass
class FeatureNormalizer:
    mean: np.ndarray
    std: np.ndarray

    def __call__(self, vec) -> np.ndarray:
        return normalize(vec, self)

    def save(self, path) -> None:
        np.savetxt(path, np.column_stack([self.mean, self.std]), fmt="%.17g")

    @classmethod
    def load(cls, path) -> "FeatureNormalizer":
        arr = np.loadtxt(Path(path), ndmin=2)
        if arr.shape[1] != 2:
            raise FeatureError(f"{path}: expected two columns (mean, std)")
        return cls(arr[:, 0].copy(), arr[:, 1].copy())


def fit_normalizer(images) -> FeatureNormalizer:
    """Per-dimension mean/std over a set of images or feature vectors."""
    rows = []
    for im in images:
        arr = np.asarray(getattr(im, "intensity", im), dtype=float)
        rows.append(arr if arr.ndim == 1 else extract(arr))
    if len(rows) < 2:
        raise FeatureError("need at least two images to fit a normalizer")
    x = np.vstack(rows)
    std = x.std(axis=0)
    return FeatureNormalizer(x.mean(axis=0), np.where(std > 0, std, 1.0))


def normalize(vec, normalizer: FeatureNormalizer) -> np.ndarray:
    return (np.asarray(vec, dtype=float) - normalizer.mean) / normalizer.std
