"""Acceptance criteria, one test per criterion.

Each test prints a PASS/FAIL/SKIP line (also collected into the terminal
summary) and then asserts, so a failing criterion fails the run.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from pumpdetect.artifact import save_artifact
from pumpdetect.core import FEATURE_NAMES, MS_PER_DAY, PipelineConfig, PumpEvent, Trades
from pumpdetect.evaluation import EventData, ModelSpec, detection_latency, kfold_cv
from pumpdetect.featurize import LabeledFeatures, featurize, window_feature_matrix
from pumpdetect.ingest import ClientConfig, TradeClient, event_day_range, merge_day_ranges
from pumpdetect.mockserver import MockExchange
from pumpdetect.models import (
    LRParams,
    RFParams,
    ThresholdModel,
    fit_threshold_detector,
    gini_importance,
    train_logreg,
    train_random_forest,
)
from pumpdetect.models.kamps import BALANCED, HOUR_MS, INITIAL, STRICT, Candles, build_candles, kamps_detect
from pumpdetect.models.logreg import loss_and_grad
from pumpdetect.replay import detect_batch, inject_pump, replay_detect
from pumpdetect.synthetic import quiet_series
from pumpdetect.tradeio import read_trades, write_trades

from .conftest import ACCEPTANCE_LINES
from .oracles import block_window_features, exhaustive_stump, strided_window_features

pytestmark = pytest.mark.acceptance


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# ---------------------------------------------------------------- 1. moving features vs oracle

def random_chunk_columns(rng):
    """Per-chunk columns (rush, trades, volume, close, max, min) of a random series."""
    n = int(rng.integers(500, 5001))
    k = int(rng.integers(150, 1009)) if rng.random() < 0.05 else int(rng.integers(2, 150))
    occupied = rng.random(n) < rng.uniform(0.2, 1.0)
    trades = np.where(occupied, rng.integers(1, 40, n), 0)
    level = 10 ** rng.uniform(-8, 3)
    px = level * np.exp(np.cumsum(rng.normal(0, 1e-3, n)))
    src = np.where(occupied, np.arange(n), 0)
    np.maximum.accumulate(src, out=src)
    close = px[src]  # empty chunks carry the previous close
    hi = np.where(occupied, close * (1 + rng.uniform(0, 0.01, n)), close)
    lo = np.where(occupied, close * (1 - rng.uniform(0, 0.01, n)), close)
    vol = np.where(occupied, rng.lognormal(0, 2, n) * level * 1e3, 0.0)
    rush = np.where(occupied & (rng.random(n) < 0.3), vol * rng.random(n), 0.0)
    if rng.random() < 0.1:
        rush[:] = 0.0
    return np.column_stack([rush, trades.astype(np.float64), vol, close, hi, lo]), k


def feature_rel_error(got, ref):
    """Relative error per entry.

    A std whose true value is below 1e-6 of its window mean is numerically
    zero for float64 two-pass arithmetic, so its denominator is floored there.
    """
    denom = np.abs(ref).copy()
    for std_at, mean_at in ((0, 1), (3, 4), (5, 6)):
        denom[:, std_at] = np.maximum(denom[:, std_at], 1e-6 * np.abs(ref[:, mean_at]))
    diff = np.abs(got - ref)
    with np.errstate(invalid="ignore", divide="ignore"):
        err = np.where(diff == 0, 0.0, diff / denom)
    return err


def test_oracle_equivalence_1000_series():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240101)
    worst = 0.0
    for s in range(1000):
        A, k = random_chunk_columns(rng)
        got = window_feature_matrix(*A.T, k)
        ref = strided_window_features(A, k)
        if s < 10:  # a few series also against the window-by-window loop
            ref2 = block_window_features(A, k)
            worst = max(worst, float(feature_rel_error(got, ref2).max()))
        assert got.shape == ref.shape
        worst = max(worst, float(feature_rel_error(got, ref).max()))
    dt = time.perf_counter() - t0
    report("oracle equivalence (1000 series, 500-5000 chunks)", worst < 1e-9 and dt < 60,
           f"max relative error {worst:.2e} (< 1e-9), {dt:.1f} s (< 60 s)")


# ---------------------------------------------------------------- 2. replay vs batch

def test_replay_batch_equivalence_50_files(tmp_path):
    t0 = time.perf_counter()
    n_alerts = 0
    mismatches = []
    for i in range(50):
        rng = np.random.default_rng([7, i])
        s = (5, 15, 25)[i % 3]
        cfg = PipelineConfig(chunk_seconds=s, window_seconds=s * int(rng.integers(20, 240)),
                             cooldown_seconds=int(rng.choice([60, 300, 1800])),
                             window_includes_current=bool(rng.random() < 0.8),
                             rush_min_fills=int(rng.choice([1, 1, 2])))
        base = quiet_series(1000 + i, duration_s=float(rng.uniform(2, 5)) * 3600,
                            rate_per_s=float(rng.uniform(0.05, 0.5)))
        events = []
        for _ in range(int(rng.integers(0, 4))):
            at = int(rng.integers(int(base.ts_ms[0]), int(base.ts_ms[-1])))
            base = inject_pump(base, at, chunk_seconds=s, seed=int(rng.integers(1 << 30)))
            events.append(PumpEvent("SYM", "x", at))
        feats = featurize(base, cfg, events, "SYM")
        kind = ("threshold", "rf", "lr")[i % 3 if feats.y.any() else 0]
        if kind == "threshold":
            model = ThresholdModel(float(np.quantile(feats.X[:, 0], rng.uniform(0.9, 1.0))))
        elif kind == "rf":
            model = train_random_forest(feats.X, feats.y, RFParams(n_trees=20, seed=i, class_weight="balanced"))
        else:
            model = train_logreg(feats.X, feats.y, LRParams(class_weight="balanced"))
        path, art = tmp_path / f"t{i}.csv", tmp_path / f"m{i}.json"
        write_trades(path, base)
        save_artifact(art, model, cfg)
        streamed = list(replay_detect(path, art, symbol="SYM"))
        batch = detect_batch(read_trades(path), model, cfg, "SYM")
        n_alerts += len(batch)
        if streamed != batch:
            mismatches.append(i)
    dt = time.perf_counter() - t0
    report("replay/batch equivalence (50 files, chunks 5/15/25 s)", not mismatches and dt < 120,
           f"{50 - len(mismatches)}/50 identical alert streams ({n_alerts} alerts total), {dt:.1f} s (< 120 s)")


# ---------------------------------------------------------------- 3. synthetic detection

DETECT = PipelineConfig()  # 25 s chunks, 7 h window, 30 min cooldown


def pump_fixture(seed):
    """Quiet 8 h series with one default injection soon after warm-up.

    The burst sits inside a single chunk and the series ends within one
    cooldown of it.
    """
    rng = np.random.default_rng([seed, 99])
    base = quiet_series(seed, duration_s=DETECT.window_seconds + 3600)
    first_chunk = int(base.ts_ms[0]) // DETECT.chunk_ms
    chunk = first_chunk + DETECT.window_chunks + int(rng.integers(10, 100))
    at = chunk * DETECT.chunk_ms + int(rng.integers(0, 20_000))
    return inject_pump(base, at, seed=seed), PumpEvent("SYN", "synthetic", at)


def onset_fixture(seed):
    """Training copy of a fixture cut at the end of its pump chunk.

    The window includes the current chunk, so every later chunk still holds
    the burst; cutting keeps those look-alikes out of the negatives.
    """
    trades, ev = pump_fixture(seed)
    end = (ev.signal_ts_ms // DETECT.chunk_ms + 1) * DETECT.chunk_ms
    return trades.between(int(trades.ts_ms[0]), end), ev


def test_synthetic_pump_detection():
    t0 = time.perf_counter()
    train = [onset_fixture(s) for s in range(10_000, 10_100)]
    feats = [featurize(t, DETECT, [e], "SYN") for t, e in train]
    X = np.concatenate([f.X for f in feats])
    y = np.concatenate([f.y for f in feats])
    rf = train_random_forest(X, y, RFParams(seed=0, class_weight="balanced"))
    thr, _ = fit_threshold_detector(X, y)
    hits = {"rf": 0, "threshold": 0}
    worst_latency = 0.0
    for seed in range(100):
        trades, ev = pump_fixture(seed)
        for name, model in (("rf", rf), ("threshold", thr)):
            alerts = detect_batch(trades, model, DETECT, "SYN")
            inside = [a for a in alerts if a.chunk_start_ms <= ev.signal_ts_ms < a.chunk_start_ms + DETECT.chunk_ms]
            if inside:
                hits[name] += 1
                (lat,) = detection_latency(alerts, [ev], DETECT)
                worst_latency = max(worst_latency, lat.seconds)
    dt = time.perf_counter() - t0
    ok = hits["rf"] >= 95 and hits["threshold"] >= 95 and worst_latency <= 25.0 and dt < 300
    report("synthetic pump detection (scale 50, 100 trials)", ok,
           f"RF {hits['rf']}/100, threshold {hits['threshold']}/100 (>= 95), "
           f"worst latency {worst_latency:.2f} s (<= 25 s), threshold={thr.threshold:.3f}, {dt:.1f} s (< 300 s)")


# ---------------------------------------------------------------- 4. random forest

def test_random_forest_correctness():
    agree = 0
    for i in range(200):
        rng = np.random.default_rng([11, i])
        n = int(rng.integers(8, 60))
        X = np.round(rng.standard_normal((n, 9)), int(rng.integers(1, 4)))
        y = rng.random(n) < rng.uniform(0.1, 0.9)
        y[0], y[1] = True, False
        msl = int(rng.integers(1, 5))
        t = train_random_forest(X, y, RFParams(n_trees=1, max_depth=1, features_per_split=9, bootstrap=False,
                                                      min_samples_leaf=msl)).trees[0]
        best, table = exhaustive_stump(X, y, msl)
        if best is None:
            agree += t.feature[0] == -1
            continue
        split = (int(t.feature[0]), float(t.threshold[0]))
        tied = [key for key, v in table.items() if abs(v - best[0]) <= 1e-12]
        # exact split unless the optimum is tied in floating point; then it must be one of the ties
        agree += split == (best[1], best[2]) if len(tied) == 1 else split in tied

    sums = []
    for i in range(20):
        rng = np.random.default_rng([12, i])
        X = rng.standard_normal((300, 9))
        y = X[:, i % 9] + rng.standard_normal(300) > 1
        sums.append(float(gini_importance(train_random_forest(X, y, RFParams(n_trees=30, seed=i))).sum()))
    imp_err = max(abs(s - 1.0) for s in sums)

    rng = np.random.default_rng(13)
    X = rng.standard_normal((400, 9))
    y = X[:, 0] * X[:, 1] > 0.2
    p = RFParams(n_trees=40, seed=123)
    runs = [json.dumps(train_random_forest(X, y, p).to_dict(), sort_keys=True) for _ in range(2)]
    runs.append(json.dumps(train_random_forest(X, y, p, n_jobs=2).to_dict(), sort_keys=True))
    same = len(set(runs)) == 1
    report("RF correctness", agree == 200 and imp_err <= 1e-9 and same,
           f"stump == exhaustive Gini on {agree}/200 datasets; importance sums within {imp_err:.1e} of 1; "
           f"serial/serial/parallel byte-identical: {same}")


# ---------------------------------------------------------------- 5. logistic regression

def test_logistic_regression_correctness():
    worst = 0.0
    monotone = 0
    for i in range(100):
        rng = np.random.default_rng([21, i])
        n, d = int(rng.integers(10, 200)), 9
        Z = rng.standard_normal((n, d)) * rng.uniform(0.1, 5.0, d)
        y = (rng.random(n) < 0.3).astype(np.float64)
        y[0], y[1] = 1.0, 0.0
        C = float(10 ** rng.uniform(-2, 2))
        theta = rng.standard_normal(d + 1)
        _, g = loss_and_grad(theta, Z, y, C)
        num = np.empty_like(theta)
        h = 1e-6
        for j in range(d + 1):
            e = np.zeros_like(theta)
            e[j] = h
            num[j] = (loss_and_grad(theta + e, Z, y, C)[0] - loss_and_grad(theta - e, Z, y, C)[0]) / (2 * h)
        worst = max(worst, float(np.linalg.norm(g - num) / max(np.linalg.norm(num), 1e-12)))
        m = train_logreg(Z, y.astype(bool), LRParams(C=C))
        monotone += m.info.final_loss <= m.info.initial_loss
    report("LR correctness", worst < 1e-5 and monotone == 100,
           f"max gradient relative error {worst:.2e} (< 1e-5); final <= initial loss on {monotone}/100")


# ---------------------------------------------------------------- 6. reference numbers on the released dataset (conditional)

RELEASED_DATA_ENV = "PUMPDETECT_RELEASED_FEATURES"
_ALIASES = {name: {name, name.rstrip("s"), name.replace("_orders", "_order"), name.replace("volumes", "volume")}
            for name in FEATURE_NAMES}


def load_released_features(path):
    """Feature CSV with one row per chunk: the nine features, a label and an event id."""
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = rows[0].keys()
    pick = {name: next(c for c in cols if c in aliases) for name, aliases in _ALIASES.items()}
    label = next(c for c in ("label", "gt") if c in cols)
    group = next(c for c in ("pump_index", "event", "group") if c in cols)
    X = np.array([[float(r[pick[n]]) for n in FEATURE_NAMES] for r in rows])
    y = np.array([r[label].strip().lower() in ("1", "true", "1.0") for r in rows])
    g = np.array([r[group] for r in rows])
    return X, y, g


def test_released_dataset_reproduction():
    path = os.environ.get(RELEASED_DATA_ENV)
    if not path or not Path(path).exists():
        line = (f"SKIP released-dataset reproduction: released dataset not available "
                f"(set {RELEASED_DATA_ENV} to its feature CSV to run)")
        print(line)
        ACCEPTANCE_LINES.append(line)
        pytest.skip(line)
    X, y, g = load_released_features(path)
    data = []
    for i, key in enumerate(np.unique(g)):
        sel = g == key
        feats = LabeledFeatures(str(key), X[sel], y[sel], np.arange(sel.sum()))
        data.append(EventData(PumpEvent(str(key), "binance", i + 1), feats))
    rep = kfold_cv(data, ModelSpec("random_forest"), k=10, seed=0, grouped=False)
    f1 = rep.mean()["f1"]
    imp = gini_importance(train_random_forest(X, y))
    first = FEATURE_NAMES[int(np.argmax(imp))]
    half = np.random.default_rng(0).random(len(y)) < 0.5
    thr, curve = fit_threshold_detector(X[half], y[half])
    i = int(np.flatnonzero(curve.thresholds == thr.threshold)[0])
    p, r = curve.precision[i], curve.recall[i]
    ok = abs(f1 - 0.920) <= 0.05 and first == "std_rush_orders" and abs(p - 0.911) <= 0.05 and abs(r - 0.899) <= 0.05
    report("released-dataset reproduction", ok,
           f"RF 10-fold F1 {f1:.3f} (0.920 +/- 0.05); top feature {first} ({imp.max():.3f}); "
           f"threshold {thr.threshold:.2f}: precision {p:.3f} (0.911), recall {r:.3f} (0.899)")


# ---------------------------------------------------------------- 7. Kamps baseline

def test_kamps_baseline_sanity():
    nested = 0
    n_fixtures = 0
    flagged = 0
    for seed in range(40):
        base = quiet_series(500 + seed, duration_s=14 * 3600)
        at = int(base.ts_ms[-1])  # the injected burst closes the last hour
        pumped = inject_pump(base, at, seed=seed)
        for t in (base, pumped):
            c = build_candles(t)
            s, b, i = (kamps_detect(c, p) for p in (STRICT, BALANCED, INITIAL))
            nested += bool(np.all(s <= b) and np.all(b <= i))
            n_fixtures += 1
        c = build_candles(pumped)
        hour = int(np.searchsorted(c.start_ms, at, side="right")) - 1
        flagged += bool(kamps_detect(c, INITIAL)[hour])
    start = 1_600_000_000_000 // HOUR_MS * HOUR_MS
    flat_price = np.full(48, 0.001)
    flat = Candles(start + np.arange(48) * HOUR_MS, flat_price, flat_price, flat_price, flat_price, np.full(48, 3.0))
    flat_flags = sum(int(kamps_detect(flat, p).sum()) for p in (STRICT, BALANCED, INITIAL))
    ok = nested == n_fixtures and flat_flags == 0 and flagged == 40
    report("Kamps baseline sanity", ok,
           f"nesting holds on {nested}/{n_fixtures} fixtures; flat series flags {flat_flags}; "
           f"injected hour flagged by Initial on {flagged}/40")


# ---------------------------------------------------------------- 8. ingestion

def decimal_fixture(n=10_000, seed=5):
    """Trades whose price/qty text carries exchange-style fixed decimals."""
    t = quiet_series(seed, start_ms=19_300 * MS_PER_DAY, duration_s=n / 0.2 * 1.1, rate_per_s=0.2)
    t = t.take(np.arange(n))
    pt = [f"{p:.8f}" for p in t.price]
    qt = [f"{q:.2f}" for q in t.qty]
    price = np.array([float(x) for x in pt])
    qty = np.array([float(x) for x in qt])
    return Trades(t.trade_id, t.ts_ms, price, qty, t.is_buy_taker, pt, qt)


def test_ingestion(tmp_path):
    fixture = decimal_fixture()
    assert len(fixture) == 10_000
    expected_path = tmp_path / "expected.csv"
    write_trades(expected_path, fixture)
    with MockExchange({"FIXBTC": fixture}, max_limit=1000) as url:
        client = TradeClient(ClientConfig(base_url=url, requests_per_minute=1e9), sleep=lambda s: None)
        got = client.fetch_trades("FIXBTC", int(fixture.ts_ms[0]) // MS_PER_DAY * MS_PER_DAY,
                                  int(fixture.ts_ms[-1]) + 1)
    write_trades(tmp_path / "fetched.csv", got)
    byte_exact = (tmp_path / "fetched.csv").read_bytes() == expected_path.read_bytes()

    merge_ok = 0
    for i in range(500):
        rng = np.random.default_rng([31, i])
        n = int(rng.integers(1, 30))
        days = rng.integers(19_000, 19_000 + int(rng.integers(5, 400)), size=n)
        events = [PumpEvent("S", "x", int(d) * MS_PER_DAY + int(rng.integers(0, MS_PER_DAY))) for d in days]
        ranges = [event_day_range(e) for e in events]
        merged = merge_day_ranges(ranges)
        brute = set()
        for lo, hi in ranges:
            brute.update(range(lo, hi))
        covered = [d for lo, hi in merged for d in range(lo, hi)]
        ok = (len(covered) == len(set(covered)) and set(covered) == brute
              and all(b1 < a2 for (_, b1), (a2, _) in zip(merged, merged[1:]))
              and all(any(a <= lo and hi <= b for a, b in merged) for lo, hi in ranges))
        merge_ok += ok
    report("ingestion", byte_exact and merge_ok == 500,
           f"mock-server fetch of the 10,000-trade fixture byte-exact: {byte_exact}; "
           f"interval-union dedup matches brute force on {merge_ok}/500 layouts")
