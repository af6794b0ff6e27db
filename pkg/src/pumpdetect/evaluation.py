"""Metrics, event-grouped cross-validation, suspect scans and detection latency."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .core import MS_PER_DAY, DetectionAlert, PipelineConfig, PipelineError, PumpEvent
from .featurize import LabeledFeatures
from .models import (
    LRParams,
    Model,
    RFParams,
    fit_threshold_detector,
    train_logreg,
    train_random_forest,
)
from .replay import cooldown_filter

log = logging.getLogger(__name__)


class TooFewEventsError(PipelineError, ValueError):
    pass


def precision_recall_f1(predicted, actual) -> tuple[float, float, float]:
    """Precision, recall and F1 of boolean predictions; empty denominators give 0."""
    p_ = np.asarray(predicted).astype(bool)
    a_ = np.asarray(actual).astype(bool)
    if p_.shape != a_.shape:
        raise ValueError(f"length mismatch: {p_.shape} vs {a_.shape}")
    tp = int(np.sum(p_ & a_))
    fp = int(np.sum(p_ & ~a_))
    fn = int(np.sum(~p_ & a_))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


@dataclass(frozen=True)
class ModelSpec:
    """What to train inside each fold."""

    kind: str = "random_forest"  # random_forest | logistic_regression | threshold
    rf: RFParams = RFParams()
    lr: LRParams = LRParams()
    feature_index: int = 0

    def fit(self, X: np.ndarray, y: np.ndarray) -> Model:
        if self.kind == "random_forest":
            return train_random_forest(X, y, self.rf)
        if self.kind == "logistic_regression":
            return train_logreg(X, y, self.lr)
        if self.kind == "threshold":
            return fit_threshold_detector(X, y, self.feature_index)[0]
        raise ValueError(f"unknown model kind {self.kind!r}")


@dataclass
class EventData:
    """Labeled features of one event's series (the core days in cross-validation)."""

    event: PumpEvent
    features: LabeledFeatures


@dataclass
class FoldResult:
    fold: int
    n_train_events: int
    n_test_events: int
    n_test_chunks: int
    precision: float
    recall: float
    f1: float


@dataclass
class CVReport:
    k: int
    seed: int
    grouped: bool
    folds: list[FoldResult]
    config: dict[str, Any] = field(default_factory=dict)

    def mean(self) -> dict[str, float]:
        return {m: float(np.mean([getattr(f, m) for f in self.folds])) for m in ("precision", "recall", "f1")}

    def to_dict(self) -> dict[str, Any]:
        return {"k": self.k, "seed": self.seed, "grouped": self.grouped, "config": self.config,
                "folds": [vars(f) for f in self.folds], "mean": self.mean()}

    def summary_csv(self) -> str:
        buf = io.StringIO()
        buf.write("fold,n_test_chunks,precision,recall,f1\n")
        for f in self.folds:
            buf.write(f"{f.fold},{f.n_test_chunks},{f.precision!r},{f.recall!r},{f.f1!r}\n")
        m = self.mean()
        buf.write(f"mean,,{m['precision']!r},{m['recall']!r},{m['f1']!r}\n")
        return buf.getvalue()


def assign_folds(n_events: int, k: int, seed: int) -> np.ndarray:
    """Fold id per event: a seeded shuffle cut into ``k`` near-equal parts."""
    if n_events < k:
        raise TooFewEventsError(f"{n_events} events cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(n_events)
    fold = np.empty(n_events, dtype=np.int64)
    for f, part in enumerate(np.array_split(perm, k)):
        fold[part] = f
    return fold


def kfold_cv(dataset: Sequence[EventData], spec: ModelSpec, k: int = 10, seed: int = 0,
             grouped: bool = True, config: PipelineConfig | None = None) -> CVReport:
    """Chunk-level precision/recall/F1 over ``k`` folds.

    With ``grouped`` (default) every chunk of an event's series lands in the
    same fold; otherwise chunks are shuffled into folds individually.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    X = np.concatenate([d.features.X for d in dataset])
    y = np.concatenate([d.features.y for d in dataset])
    owner = np.concatenate([np.full(len(d.features), i) for i, d in enumerate(dataset)])
    if grouped:
        chunk_fold = assign_folds(len(dataset), k, seed)[owner]
    else:
        if len(y) < k:
            raise TooFewEventsError("fewer chunks than folds")
        chunk_fold = assign_folds(len(y), k, seed)
    folds = []
    for f in range(k):
        test = chunk_fold == f
        model = spec.fit(X[~test], y[~test])
        p, r, f1 = precision_recall_f1(model.predict(X[test]), y[test])
        n_test_ev = len(np.unique(owner[test]))
        folds.append(FoldResult(f, len(np.unique(owner[~test])), n_test_ev, int(test.sum()), p, r, f1))
        log.info("fold %d: p=%.3f r=%.3f f1=%.3f", f, p, r, f1)
    cfg = {"model": spec.kind, "rf": vars(spec.rf), "lr": vars(spec.lr)}
    if config is not None:
        cfg["pipeline"] = config.to_dict()
    return CVReport(k, seed, grouped, folds, cfg)


def core_range(event: PumpEvent) -> tuple[int, int]:
    """``[start, end)`` ms of the signal day plus the day before and after (UTC)."""
    d = event.signal_day
    return (d - 1) * MS_PER_DAY, (d + 2) * MS_PER_DAY


@dataclass
class ScanResult:
    matched: list[DetectionAlert]
    suspects: list[DetectionAlert]

    def to_dict(self) -> dict[str, Any]:
        return {"n_matched": len(self.matched), "n_suspects": len(self.suspects),
                "matched": [a.to_dict() for a in self.matched],
                "suspects": [a.to_dict() for a in self.suspects]}


def scan_suspects(model: Model, series: Sequence[LabeledFeatures], events: Sequence[PumpEvent],
                  config: PipelineConfig, known_events: Sequence[PumpEvent] = ()) -> ScanResult:
    """Alerts outside every event's core three days, cooldown-gated per symbol.

    ``series`` holds the full-range features per symbol file. Alerts within one
    chunk of any known signal are reported as matched, the rest as suspects.
    """
    chunk_ms = config.chunk_ms
    reference = list(events) + list(known_events)
    matched, suspects = [], []
    for feats in series:
        if len(feats) == 0:
            continue
        starts = feats.chunk_start_ms
        positive = model.predict(feats.X)
        scores = model.score(feats.X)
        keep = cooldown_filter(starts, positive, config.cooldown_seconds * 1000)
        sym_events = [e for e in events if e.symbol == feats.symbol]
        for i in keep:
            t = int(starts[i])
            if any(lo <= t < hi for lo, hi in map(core_range, sym_events)):
                continue
            alert = DetectionAlert(feats.symbol, t, float(scores[i]), model.model_id)
            near = any(e.symbol == feats.symbol and abs(e.signal_ts_ms - t) < 2 * chunk_ms
                       for e in reference)
            (matched if near else suspects).append(alert)
    return ScanResult(matched, suspects)


@dataclass(frozen=True)
class Latency:
    event: PumpEvent
    seconds: float | None  # None when the event was missed

    @property
    def missed(self) -> bool:
        return self.seconds is None


def detection_latency(alerts: Sequence[DetectionAlert], events: Sequence[PumpEvent],
                      config: PipelineConfig) -> list[Latency]:
    """Seconds from each signal to the end of the chunk of its first alert.

    An alert counts for an event when its chunk starts within one cooldown of
    the signal on either side, so pre-pump alerts give negative latencies.
    """
    out = []
    cd = config.cooldown_seconds * 1000
    for ev in events:
        cands = sorted(a.chunk_start_ms for a in alerts
                       if a.symbol == ev.symbol and abs(a.chunk_start_ms - ev.signal_ts_ms) <= cd)
        if not cands:
            out.append(Latency(ev, None))
            continue
        end = cands[0] + config.chunk_ms
        out.append(Latency(ev, (end - ev.signal_ts_ms) / 1000.0))
    return out


def hourly_labels(candle_start_ms: np.ndarray, events: Sequence[PumpEvent], width_ms: int = 3_600_000) -> np.ndarray:
    starts = np.asarray(candle_start_ms)
    y = np.zeros(len(starts), dtype=bool)
    for e in events:
        i = int(np.searchsorted(starts, e.signal_ts_ms, side="right")) - 1
        if 0 <= i and e.signal_ts_ms < starts[i] + width_ms:
            y[i] = True
    return y
