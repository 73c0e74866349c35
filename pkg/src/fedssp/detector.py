"""Reconstruction-error anomaly scoring and threshold calibration.

A sample is scored by how much of it lives outside the learned subspace:
project onto an orthonormalized copy of the global frame, subtract, and take
the squared norm of what is left. Normal traffic scores low; anything the
subspace cannot explain scores high. The decision threshold is an empirical
quantile of the scores of known-normal training samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError, DimensionError
from .manifold import qr_orthonormalize


def score(Z: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Squared residual ||x - Q Q^T x||^2 per column of X.

    Z is orthonormalized first so the aggregated frame can be used directly.
    """
    Z = np.asarray(Z, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or Z.ndim != 2:
        raise DimensionError("Z and X must be 2-d arrays")
    if X.shape[0] != Z.shape[0]:
        raise DimensionError(f"X has {X.shape[0]} features, frame has {Z.shape[0]}")
    Q = qr_orthonormalize(Z)
    residual = X - Q @ (Q.T @ X)
    return np.sum(residual * residual, axis=0)


def fit_threshold(scores: np.ndarray, quantile: float = 0.95) -> float:
    """Empirical quantile of normal-sample scores, linear interpolation."""
    scores = np.asarray(scores, dtype=float).ravel()
    if scores.size == 0:
        raise DataError("cannot fit a threshold on zero scores")
    if not (0.0 < quantile <= 1.0):
        raise ValueError(f"quantile must be in (0, 1], got {quantile}")
    return float(np.quantile(scores, quantile, method="linear"))


def classify(scores: np.ndarray, threshold: float) -> np.ndarray:
    """Flag scores strictly above the threshold as anomalous."""
    if not np.isfinite(threshold):
        raise ValueError(f"threshold must be finite, got {threshold}")
    return np.asarray(scores, dtype=float) > threshold


@dataclass(frozen=True)
class DetectionReport:
    """Confusion counts and percentage metrics for one labeled evaluation."""

    threshold: float
    scores: np.ndarray
    tp: int
    fp: int
    tn: int
    fn: int
    acc: float
    pre: float
    recall: float
    fnr: float
    f1: float
    degenerate: tuple[str, ...]

    def to_record(self) -> dict:
        return {
            "acc": self.acc,
            "pre": self.pre,
            "recall": self.recall,
            "fnr": self.fnr,
            "f1": self.f1,
            "threshold": self.threshold,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "degenerate": list(self.degenerate),
        }


def compute_metrics(pred: np.ndarray, truth: np.ndarray, *,
                    threshold: float = float("nan"),
                    scores: Optional[np.ndarray] = None) -> DetectionReport:
    """Confusion matrix plus percentage metrics; anomaly is the positive class.

    Zero-denominator metrics are reported as 0 and named in `degenerate`
    instead of raising, so wholly one-sided test sets still produce a report.
    """
    pred = np.asarray(pred, dtype=bool).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    if pred.shape != truth.shape:
        raise DimensionError(f"pred has {pred.size} entries, truth has {truth.size}")
    if pred.size == 0:
        raise ValueError("cannot compute metrics on an empty evaluation")

    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    tn = int(np.sum(~pred & ~truth))
    fn = int(np.sum(~pred & truth))

    degenerate = []

    def ratio(num: int, den: int, name: str) -> float:
        if den == 0:
            degenerate.append(name)
            return 0.0
        return 100.0 * num / den

    acc = ratio(tp + tn, tp + fp + tn + fn, "acc")
    pre = ratio(tp, tp + fp, "pre")
    recall = ratio(tp, tp + fn, "recall")
    fnr = ratio(fn, tp + fn, "fnr")
    if pre + recall == 0.0:
        degenerate.append("f1")
        f1 = 0.0
    else:
        f1 = 2.0 * pre * recall / (pre + recall)

    return DetectionReport(
        threshold=float(threshold),
        scores=np.array([] if scores is None else scores, dtype=float),
        tp=tp, fp=fp, tn=tn, fn=fn,
        acc=acc, pre=pre, recall=recall, fnr=fnr, f1=f1,
        degenerate=tuple(degenerate),
    )


def evaluate(Z: np.ndarray, X_test: np.ndarray, labels: np.ndarray,
             threshold: float) -> DetectionReport:
    """Score a labeled test matrix and report metrics at the given threshold."""
    s = score(Z, X_test)
    labels = np.asarray(labels).ravel()
    if labels.size != s.size:
        raise DimensionError(f"{labels.size} labels for {s.size} test columns")
    pred = classify(s, threshold)
    return compute_metrics(pred, labels.astype(bool), threshold=threshold, scores=s)
