"""
Threshold detector, random forest and logistic regression
==========================================================

Train on a handful of injected tapes, look at the PR curve of the
single-feature detector, the forest's Gini importances and a grouped k-fold.
"""

import numpy as np

from pumpdetect import FEATURE_NAMES, PipelineConfig, PumpEvent, featurize
from pumpdetect.evaluation import EventData, ModelSpec, kfold_cv
from pumpdetect.models import RFParams, fit_threshold_detector, gini_importance, train_random_forest
from pumpdetect.replay import inject_pump
from pumpdetect.synthetic import quiet_series

# A shorter window keeps this quick: 25 s chunks, 1 h window
config = PipelineConfig(chunk_seconds=25, window_seconds=3600)

data = []
for seed in range(30):
    rng = np.random.default_rng(seed)
    base = quiet_series(seed, duration_s=3 * 3600, qty_median=float(rng.uniform(2000, 8000)))
    c0 = int(base.ts_ms[0]) // config.chunk_ms
    at = (c0 + config.window_chunks + int(rng.integers(20, 200))) * config.chunk_ms + 1_000
    # cut at the end of the pump chunk (see README: training fixtures)
    tape = inject_pump(base, at, seed=seed)
    tape = tape.between(int(tape.ts_ms[0]), (at // config.chunk_ms + 1) * config.chunk_ms)
    ev = PumpEvent(f"S{seed:02d}BTC", "synthetic", at)
    data.append(EventData(ev, featurize(tape, config, [ev], ev.symbol)))

X = np.concatenate([d.features.X for d in data])
y = np.concatenate([d.features.y for d in data])
print(f"{len(y)} chunks, {y.sum()} positive")

thr, curve = fit_threshold_detector(X, y)
best = np.flatnonzero(curve.thresholds == thr.threshold)[0]
print(f"threshold on std_rush_orders: {thr.threshold:.3f} "
      f"(precision {curve.precision[best]:.2f}, recall {curve.recall[best]:.2f})")

rf = train_random_forest(X, y, RFParams(n_trees=100, class_weight="balanced"))
for name, w in sorted(zip(FEATURE_NAMES, gini_importance(rf)), key=lambda t: -t[1]):
    print(f"  {name:16s} {w:.3f}")

# Folds group whole events, so a pump's own window never leaks into training
for kind in ("threshold", "random_forest", "logistic_regression"):
    spec = ModelSpec(kind, rf=RFParams(n_trees=50, class_weight="balanced"))
    m = kfold_cv(data, spec, k=5, seed=0).mean()
    print(f"{kind:20s} p={m['precision']:.2f} r={m['recall']:.2f} f1={m['f1']:.2f}")
