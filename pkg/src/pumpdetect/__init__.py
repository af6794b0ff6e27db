"""Real-time pump-and-dump detection from exchange trade tapes.

Pipeline: trades -> rush orders -> fixed-width chunks -> moving-window
features -> classifier -> cooldown-gated alerts.
"""

from .core import (
    FEATURE_NAMES,
    Chunk,
    DetectionAlert,
    FeatureVector,
    PipelineConfig,
    PumpEvent,
    RushOrder,
    TradeRecord,
    Trades,
    ValidationReport,
    validate_trade_series,
)
from .featurize import (
    ChunkSeries,
    chunk_series,
    featurize,
    infer_rush_orders,
    label_chunks,
    moving_features,
)
from .models import (
    ForestModel,
    KampsConfig,
    LRModel,
    LRParams,
    RFParams,
    ThresholdModel,
    build_candles,
    fit_threshold_detector,
    forest_predict,
    gini_importance,
    kamps_detect,
    train_logreg,
    train_random_forest,
)
from .replay import ReplayEngine, detect_batch, inject_pump, replay_detect

__version__ = "0.1.0"

__all__ = [
    "FEATURE_NAMES",
    "Chunk",
    "DetectionAlert",
    "FeatureVector",
    "PipelineConfig",
    "PumpEvent",
    "RushOrder",
    "TradeRecord",
    "Trades",
    "ValidationReport",
    "validate_trade_series",
    "ChunkSeries",
    "chunk_series",
    "featurize",
    "infer_rush_orders",
    "label_chunks",
    "moving_features",
    "ForestModel",
    "KampsConfig",
    "LRModel",
    "LRParams",
    "RFParams",
    "ThresholdModel",
    "build_candles",
    "fit_threshold_detector",
    "forest_predict",
    "gini_importance",
    "kamps_detect",
    "train_logreg",
    "train_random_forest",
    "ReplayEngine",
    "detect_batch",
    "inject_pump",
    "replay_detect",
]
