"""Single-feature threshold detector fitted on a precision-recall curve."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from ..core import FEATURE_NAMES
from .forest import FORMAT_VERSION, DegenerateLabelsError, DimensionMismatchError


@dataclass(frozen=True)
class PRCurve:
    """Precision/recall for each candidate threshold (ascending)."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray

    @property
    def f1(self) -> np.ndarray:
        p, r = self.precision, self.recall
        with np.errstate(invalid="ignore", divide="ignore"):
            f = 2 * p * r / (p + r)
        return np.where(p + r > 0, f, 0.0)


def pr_curve(values, labels) -> PRCurve:
    """Rule ``fire iff value >= t`` evaluated at every distinct value ``t``.

    Precision is 0 where nothing fires.
    """
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    order = np.argsort(-values, kind="stable")
    v = values[order]
    tp = np.cumsum(labels[order])
    fired = np.arange(1, len(v) + 1)
    # last position of each distinct value when scanning from the top
    last = np.flatnonzero(np.r_[v[1:] != v[:-1], True])
    thr = v[last][::-1]
    tp = tp[last][::-1]
    fired = fired[last][::-1]
    precision = tp / fired
    recall = tp / n_pos if n_pos else np.zeros(len(tp))
    return PRCurve(thr, precision, recall)


@dataclass
class ThresholdModel:
    """Fires iff the chosen feature is at least ``threshold``."""

    threshold: float
    feature_index: int = 0
    model_id: str = "threshold"

    @property
    def feature_name(self) -> str:
        return FEATURE_NAMES[self.feature_index]

    def score(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] <= self.feature_index:
            raise DimensionMismatchError("feature index out of range")
        return X[:, self.feature_index]

    def predict(self, X) -> np.ndarray:
        return self.score(X) >= self.threshold

    def to_dict(self) -> dict[str, Any]:
        return {"format_version": FORMAT_VERSION, "kind": "threshold", "model_id": self.model_id,
                "feature_index": self.feature_index, "feature": self.feature_name,
                "threshold": self.threshold}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ThresholdModel:
        return cls(float(d["threshold"]), int(d["feature_index"]), d.get("model_id", "threshold"))


def fit_threshold_detector(X, y, feature_index: int = 0) -> tuple[ThresholdModel, PRCurve]:
    """Pick the F1-maximizing threshold on the training curve.

    Ties go to the higher threshold (fewer alerts).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y).astype(bool)
    if not y.any():
        raise DegenerateLabelsError("need at least one positive to fit a threshold")
    curve = pr_curve(X[:, feature_index], y)
    f1 = curve.f1
    best = len(f1) - 1 - int(np.argmax(f1[::-1]))
    return ThresholdModel(float(curve.thresholds[best]), feature_index), curve
