"""Evaluation metrics and error analyses for height predictions.

All comparisons are prediction versus ground-truth label at labeled pixels.
The signed error convention is ``prediction - label``: negative errors mean
the estimate is smaller than the measurement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, NumericalError
from .gedi import SparseLabels

BIN_WIDTH = 10.0
BIN_RANGE = (0.0, 60.0)
MAPE_MIN_LABEL = 0.5   # meters; guards the relative error against tiny labels
SCATTER_RANGE = (0.0, 60.0)


@dataclass
class PairSet:
    """Paired (prediction, label) samples with finite values, labels >= 0."""

    predictions: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.predictions = np.asarray(self.predictions, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.predictions.shape != self.labels.shape or self.predictions.ndim != 1:
            raise ValueError("predictions and labels must be equal-length 1-D arrays")
        if not (np.isfinite(self.predictions).all() and np.isfinite(self.labels).all()):
            raise NumericalError("pair set contains non-finite values")
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be nonnegative")

    def __len__(self) -> int:
        return int(self.predictions.size)

    @classmethod
    def from_prediction_grid(cls, pred: np.ndarray, labels: SparseLabels) -> "PairSet":
        """Pair the prediction grid with every label measurement in place."""
        pred = np.asarray(pred, dtype=np.float64)
        ps, ys = [], []
        for track in labels.tracks:
            for m in track.measurements:
                ps.append(pred[m.py, m.px])
                ys.append(m.h)
        return cls(np.array(ps), np.array(ys))


@dataclass
class MetricsReport:
    mae: float
    mse: float
    rmse: float
    rrmse: float
    mape: float
    r2: float
    n_pairs: int
    filter_description: str

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "mse": self.mse,
            "rmse": self.rmse,
            "rrmse": self.rrmse,
            "mape": self.mape,
            "r2": self.r2,
            "n_pairs": self.n_pairs,
            "filter": self.filter_description,
        }


@dataclass
class BinStats:
    lo: float
    hi: float
    count: int
    mean_error: float | None = None
    median_error: float | None = None
    q1: float | None = None
    q3: float | None = None
    whisker_low: float | None = None
    whisker_high: float | None = None


def compute_metrics(pairs: PairSet, label_gt: float | None = None) -> MetricsReport:
    """Standard error metric suite, optionally restricted to labels above a cut.

    RRMSE is RMSE over the mean label; MAPE averages ``|error| / label``
    over pairs with labels above ``MAPE_MIN_LABEL``.  R-squared is left
    unclamped (it goes negative for predictors worse than the label mean)
    and is NaN when the labels have zero variance.
    """
    p, y = pairs.predictions, pairs.labels
    description = "none"
    if label_gt is not None:
        keep = y > label_gt
        p, y = p[keep], y[keep]
        description = f"label > {label_gt:g}"
    if p.size == 0:
        raise InputError(f"no pairs left to evaluate (filter: {description})")

    err = p - y
    mae = float(np.abs(err).mean())
    mse = float((err * err).mean())
    rmse = float(np.sqrt(mse))
    rrmse = float(rmse / y.mean()) if y.mean() != 0 else float("nan")

    rel = y > MAPE_MIN_LABEL
    mape = float((np.abs(err[rel]) / y[rel]).mean()) if rel.any() else float("nan")

    ss_res = float((err * err).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")

    return MetricsReport(mae, mse, rmse, rrmse, mape, r2, int(p.size), description)


def bin_errors(pairs: PairSet) -> list[BinStats]:
    """Signed-error distribution per 10 m label bin over [0, 60).

    Whiskers follow the usual boxplot rule: the most extreme errors within
    1.5 interquartile ranges of the quartiles.
    """
    err = pairs.predictions - pairs.labels
    out = []
    lo = BIN_RANGE[0]
    while lo < BIN_RANGE[1]:
        hi = lo + BIN_WIDTH
        sel = (pairs.labels >= lo) & (pairs.labels < hi)
        if not sel.any():
            out.append(BinStats(lo, hi, 0))
        else:
            e = np.sort(err[sel])
            q1, med, q3 = np.percentile(e, [25, 50, 75])
            iqr = q3 - q1
            inside = e[(e >= q1 - 1.5 * iqr) & (e <= q3 + 1.5 * iqr)]
            out.append(
                BinStats(
                    lo, hi, int(e.size),
                    mean_error=float(e.mean()),
                    median_error=float(med),
                    q1=float(q1), q3=float(q3),
                    whisker_low=float(inside[0]), whisker_high=float(inside[-1]),
                )
            )
        lo = hi
    return out


@dataclass
class ScatterSummary:
    counts: np.ndarray      # (cells, cells), label along axis 0
    edges: np.ndarray
    r2: float


def scatter_summary(pairs: PairSet, cell: float = 1.0) -> ScatterSummary:
    """2-D label/prediction density over [0, 60]^2 plus the unclamped R^2."""
    lo, hi = SCATTER_RANGE
    edges = np.arange(lo, hi + cell, cell)
    counts, _, _ = np.histogram2d(pairs.labels, pairs.predictions, bins=(edges, edges))
    if len(pairs) == 0:
        r2 = float("nan")
    else:
        y, p = pairs.labels, pairs.predictions
        ss_tot = float(((y - y.mean()) ** 2).sum())
        r2 = 1.0 - float(((p - y) ** 2).sum()) / ss_tot if ss_tot > 0 else float("nan")
    return ScatterSummary(counts, edges, r2)


def read_pairs(path) -> PairSet:
    """Read a pair CSV with ``prediction,label`` columns."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"pair file not found: {path}")
    ps, ys = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"prediction", "label"} <= set(reader.fieldnames):
            raise InputError(f"{path.name} needs 'prediction' and 'label' columns")
        for row in reader:
            ps.append(float(row["prediction"]))
            ys.append(float(row["label"]))
    return PairSet(np.array(ps), np.array(ys))
