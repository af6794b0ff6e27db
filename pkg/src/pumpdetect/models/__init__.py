"""Detectors: random forest, logistic regression, threshold, and the hourly baseline."""

from __future__ import annotations

from typing import Any, Union

from .forest import (
    DegenerateLabelsError,
    DimensionMismatchError,
    ForestModel,
    RFParams,
    forest_predict,
    gini_importance,
    train_random_forest,
)
from .kamps import BALANCED, INITIAL, PRESETS, STRICT, Candle, Candles, KampsConfig, build_candles, kamps_detect
from .logreg import LRModel, LRParams, NonFiniteLossError, loss_and_grad, train_logreg
from .threshold import PRCurve, ThresholdModel, fit_threshold_detector, pr_curve

Model = Union[ForestModel, LRModel, ThresholdModel]

_KINDS = {"random_forest": ForestModel, "logistic_regression": LRModel, "threshold": ThresholdModel}


def model_from_dict(d: dict[str, Any]) -> Model:
    try:
        cls = _KINDS[d["kind"]]
    except KeyError:
        raise ValueError(f"unknown model kind {d.get('kind')!r}") from None
    return cls.from_dict(d)


__all__ = [
    "BALANCED", "INITIAL", "PRESETS", "STRICT", "Candle", "Candles", "DegenerateLabelsError",
    "DimensionMismatchError", "ForestModel", "KampsConfig", "LRModel", "LRParams", "Model",
    "NonFiniteLossError", "PRCurve", "RFParams", "ThresholdModel", "build_candles",
    "fit_threshold_detector", "forest_predict", "gini_importance", "kamps_detect",
    "loss_and_grad", "model_from_dict", "pr_curve", "train_logreg", "train_random_forest",
]
