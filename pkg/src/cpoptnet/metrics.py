"""Forecast error metrics and their aggregation across series."""

import csv
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricReport:
    mae: float
    rmse: float
    cosine_sim: float
    jaccard_dist: float
    n: int


def cosine_similarity(p, a):
    """``p.a / (|p||a|)``; 1.0 when both are zero and 0.0 when exactly one is."""
    np_, na = np.linalg.norm(p), np.linalg.norm(a)
    if np_ == 0 and na == 0:
        return 1.0
    if np_ == 0 or na == 0:
        return 0.0
    return float(np.clip(np.dot(p, a) / (np_ * na), -1.0, 1.0))


def jaccard_distance(p, a):
    """Weighted (Ruzicka) Jaccard distance on the nonnegative parts of ``p`` and ``a``."""
    p = np.maximum(p, 0.0)
    a = np.maximum(a, 0.0)
    hi = float(np.sum(np.maximum(p, a)))
    if hi == 0:
        return 0.0
    return 1.0 - float(np.sum(np.minimum(p, a))) / hi


def evaluate(pred, actual):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    actual = np.asarray(actual, dtype=np.float64).reshape(-1)
    if pred.shape != actual.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions, {actual.size} actuals")
    if pred.size == 0:
        raise ValueError("cannot evaluate empty vectors")
    err = pred - actual
    return MetricReport(
        mae=float(np.mean(np.abs(err))),
        rmse=math.sqrt(float(np.mean(err * err))),
        cosine_sim=cosine_similarity(pred, actual),
        jaccard_dist=jaccard_distance(pred, actual),
        n=int(pred.size),
    )


def aggregate(reports):
    """Pool reports weighted by sample count.

    MAE is the weighted mean of the per-report MAEs and RMSE is recomputed
    from the weighted mean squared error, which equals pooling the raw
    errors. Cosine similarity and Jaccard distance are weighted means.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to aggregate")
    n = np.array([r.n for r in reports], dtype=np.float64)
    total = n.sum()

    def wmean(vals):
        return float(np.dot(n, vals) / total)

    return MetricReport(
        mae=wmean([r.mae for r in reports]),
        rmse=math.sqrt(wmean([r.rmse ** 2 for r in reports])),
        cosine_sim=wmean([r.cosine_sim for r in reports]),
        jaccard_dist=wmean([r.jaccard_dist for r in reports]),
        n=int(total),
    )


METRIC_NAMES = ("mae", "jaccard_dist", "cosine_sim", "rmse")


def write_report_csv(path, scoped):
    """``scoped`` is a sequence of ``(scope, MetricReport)`` pairs."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scope", "metric", "value", "n"])
        for scope, rep in scoped:
            for name in METRIC_NAMES:
                w.writerow([scope, name, repr(float(getattr(rep, name))), rep.n])
