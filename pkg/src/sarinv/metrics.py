"""Error metrics for angle estimates."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields

import numpy as np

from .geometry import angular_error_array

OUTLIER_THRESHOLD = 50.0


def _errors(preds, truths, circular=False) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=float).ravel()
    t = np.asarray(truths, dtype=float).ravel()
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions, {t.size} truths")
    if p.size == 0:
        raise ValueError("metrics need at least one sample")
    return angular_error_array(p, t, circular), t


def mae(preds, truths, circular=False) -> float:
    err, _ = _errors(preds, truths, circular)
    return float(err.mean())


def mape(preds, truths, circular=False) -> float:
    """Mean of |error| / max(|truth|, 1 degree), as a fraction."""
    err, t = _errors(preds, truths, circular)
    return float(np.mean(err / np.maximum(np.abs(t), 1.0)))


def rmse(preds, truths, circular=False) -> float:
    err, _ = _errors(preds, truths, circular)
    return float(np.sqrt(np.mean(err ** 2)))


def lower_median(x) -> float:
    s = np.sort(np.asarray(x, dtype=float))
    return float(s[(len(s) - 1) // 2])


def medae(preds, truths, circular=False) -> float:
    err, _ = _errors(preds, truths, circular)
    return lower_median(err)


def count_outliers(abs_errors, threshold: float = OUTLIER_THRESHOLD) -> int:
    return int(np.sum(np.asarray(abs_errors, dtype=float) > threshold))


@dataclass
class MetricsRecord:
    MAE_alpha: float
    MAE_beta: float
    MAE_mean: float
    MAPE: float
    RMSE: float
    MedAE: float
    outliers: int
    n: int
    runtime_s: float = 0.0
    mean_steps: float = 0.0

    def as_row(self, **extra) -> dict:
        return {**extra, **asdict(self)}


METRIC_COLUMNS = [f.name for f in fields(MetricsRecord)]


def metrics_record(preds, truths, runtime_s: float = 0.0, mean_steps: float = 0.0,
                   circular_beta: bool = True) -> MetricsRecord:
    """Per-angle MAE plus MAPE/RMSE/MedAE pooled over both angles.

    ``preds`` and ``truths`` are (n, 2) arrays of (alpha, beta).
    """
    p = np.asarray(preds, dtype=float).reshape(-1, 2)
    t = np.asarray(truths, dtype=float).reshape(-1, 2)
    if p.shape != t.shape or len(p) == 0:
        raise ValueError("need matching, non-empty (n, 2) prediction and truth arrays")
    ea = angular_error_array(p[:, 0], t[:, 0])
    eb = angular_error_array(p[:, 1], t[:, 1], circular_beta)
    pooled = np.concatenate([ea, eb])
    denom = np.maximum(np.abs(np.concatenate([t[:, 0], t[:, 1]])), 1.0)
    return MetricsRecord(
        MAE_alpha=float(ea.mean()), MAE_beta=float(eb.mean()),
        MAE_mean=float(0.5 * (ea.mean() + eb.mean())),
        MAPE=float(np.mean(pooled / denom)), RMSE=float(np.sqrt(np.mean(pooled ** 2))),
        MedAE=lower_median(pooled), outliers=count_outliers(pooled), n=len(p),
        runtime_s=float(runtime_s), mean_steps=float(mean_steps))


def write_table(rows, path, columns=None) -> None:
    columns = columns or list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        w.writerows(rows)


def read_table(path) -> list[dict]:
    """Rows as dicts; numeric-looking fields become int or float."""
    def conv(v):
        for typ in (int, float):
            try:
                return typ(v)
            except ValueError:
                pass
        return v

    with open(path, newline="") as fh:
        return [{k: conv(v) for k, v in row.items()} for row in csv.DictReader(fh)]
