"""Trade-by-trade replay of the detector, batch reference path, and pump injection."""

from __future__ import annotations

import os
from collections import deque
from typing import Iterable, Iterator, Sequence

import numpy as np

from .artifact import check_compatible, load_artifact
from .core import (
    DetectionAlert,
    PipelineConfig,
    PipelineError,
    TradeRecord,
    Trades,
    UnsortedInputError,
    as_trades,
)
from .featurize import chunk_series, featurize, window_feature_matrix
from .models import Model
from .tradeio import iter_trade_rows


class OutOfRangeError(PipelineError, ValueError):
    pass


def cooldown_filter(chunk_start_ms: np.ndarray, positive: np.ndarray, cooldown_ms: int) -> list[int]:
    """Indices of positives that survive a per-symbol pause of ``cooldown_ms`` after each alert."""
    kept: list[int] = []
    last = None
    for i in np.flatnonzero(positive):
        t = int(chunk_start_ms[i])
        if last is None or t - last >= cooldown_ms:
            kept.append(int(i))
            last = t
    return kept


def detect_batch(trades: Trades | Iterable[TradeRecord], model: Model, config: PipelineConfig,
                 symbol: str = "") -> list[DetectionAlert]:
    """Featurize the whole series at once, score every chunk, then apply the cooldown."""
    feats = featurize(trades, config, symbol=symbol)
    if len(feats) == 0:
        return []
    scores = model.score(feats.X)
    positive = model.predict(feats.X)
    keep = cooldown_filter(feats.chunk_start_ms, positive, config.cooldown_seconds * 1000)
    return [DetectionAlert(symbol, int(feats.chunk_start_ms[i]), float(scores[i]), model.model_id)
            for i in keep]


class ReplayEngine:
    """Streaming detector for one symbol.

    Feed trades in ``(ts_ms, trade_id)`` order with :meth:`push`; each call
    returns the alerts raised by the chunks it closed. Call :meth:`finish` at the
    end of the stream to close the last chunk. Only the last window of chunks is
    kept in memory (:attr:`buffered_chunks`).
    """

    def __init__(self, model: Model, config: PipelineConfig, symbol: str = ""):
        self.model = model
        self.config = config
        self.symbol = symbol
        self._k = config.window_chunks
        self._lag = 0 if config.window_includes_current else 1
        self._buf: deque[tuple] = deque(maxlen=self._k + self._lag)
        self._origin: int | None = None
        self._idx = 0
        self._last_key: tuple[int, int] | None = None
        self._last_alert_ms: int | None = None
        self._reset_chunk(None)
        self._ms_ts = -1
        self._ms_vol = 0.0
        self._ms_fills = 0
        self.n_chunks = 0

    @property
    def buffered_chunks(self) -> int:
        return len(self._buf)

    def _reset_chunk(self, carry_close: float | None) -> None:
        self._n = 0
        self._qvol = 0.0
        self._rvol = 0.0
        self._close = carry_close
        self._pmax = carry_close
        self._pmin = carry_close

    def _flush_ms(self) -> None:
        if self._ms_fills >= self.config.rush_min_fills:
            self._rvol += self._ms_vol
        self._ms_ts = -1
        self._ms_vol = 0.0
        self._ms_fills = 0

    def _close_chunk(self) -> DetectionAlert | None:
        self._flush_ms()
        start = self._origin + self._idx * self.config.chunk_ms
        self._buf.append((start, self._n, self._qvol, self._rvol, self._close, self._pmax, self._pmin))
        self.n_chunks += 1
        alert = None
        if len(self._buf) == self._k + self._lag:
            rows = list(self._buf)[: self._k]
            cols = list(zip(*rows))
            X = window_feature_matrix(np.array(cols[3]), np.array(cols[1], dtype=np.float64),
                                      np.array(cols[2]), np.array(cols[4]), np.array(cols[5]),
                                      np.array(cols[6]), self._k)
            if bool(self.model.predict(X)[0]):
                cooldown = self.config.cooldown_seconds * 1000
                if self._last_alert_ms is None or start - self._last_alert_ms >= cooldown:
                    self._last_alert_ms = start
                    alert = DetectionAlert(self.symbol, start, float(self.model.score(X)[0]),
                                           self.model.model_id)
        self._idx += 1
        self._reset_chunk(self._close)
        return alert

    def push_values(self, trade_id: int, ts_ms: int, price: float, qty: float, is_buy_taker: bool) -> list[DetectionAlert]:
        key = (ts_ms, trade_id)
        if self._last_key is not None and key <= self._last_key:
            raise UnsortedInputError(f"trade {key} arrives after {self._last_key}")
        self._last_key = key
        width = self.config.chunk_ms
        alerts = []
        if self._origin is None:
            self._origin = (ts_ms // width) * width
        idx = (ts_ms - self._origin) // width
        while self._idx < idx:
            a = self._close_chunk()
            if a is not None:
                alerts.append(a)
        qv = price * qty
        self._n += 1
        self._qvol += qv
        self._close = price
        self._pmax = price if self._pmax is None or self._n == 1 else max(self._pmax, price)
        self._pmin = price if self._pmin is None or self._n == 1 else min(self._pmin, price)
        if is_buy_taker:
            if ts_ms != self._ms_ts:
                self._flush_ms()
                self._ms_ts = ts_ms
            self._ms_vol += qv
            self._ms_fills += 1
        return alerts

    def push(self, trade: TradeRecord) -> list[DetectionAlert]:
        return self.push_values(trade.trade_id, trade.ts_ms, trade.price, trade.qty, trade.is_buy_taker)

    def finish(self) -> list[DetectionAlert]:
        if self._origin is None or self._n == 0:
            return []
        a = self._close_chunk()
        return [a] if a is not None else []

    def run(self, trades: Iterable[TradeRecord]) -> Iterator[DetectionAlert]:
        for tr in trades:
            yield from self.push(tr)
        yield from self.finish()


def replay_detect(trade_file: str | os.PathLike, artifact: str | os.PathLike,
                  config: PipelineConfig | None = None, symbol: str = "") -> Iterator[DetectionAlert]:
    """Stream a trade file through a saved model, yielding alerts in chunk order.

    Lines are parsed one at a time; a malformed line aborts with its line number.
    """
    model, trained = load_artifact(artifact)
    config = config or trained
    check_compatible(trained, config)
    engine = ReplayEngine(model, config, symbol)
    for tid, ts, pt, qt, buy in iter_trade_rows(trade_file):
        yield from engine.push_values(tid, ts, float(pt), float(qt), buy)
    yield from engine.finish()


def inject_pump(base: Trades | Sequence[TradeRecord], at_ms: int, n_rush: int = 10,
                rush_volume_scale: float = 50.0, chunk_seconds: int = 25, fills_per_rush: int = 3,
                price_jump: float = 0.2, burst_ms: int = 5000, seed: int = 0) -> Trades:
    """Insert a synthetic pump: ``n_rush`` multi-fill buy bursts at distinct ms in ``[at_ms, at_ms + burst_ms)``.

    Each burst carries ``rush_volume_scale`` times the base series' median
    per-chunk quote volume (median over non-empty chunks when the plain median
    is zero), at prices climbing to ``1 + price_jump`` times the last price before
    ``at_ms``. Trades are re-sorted and renumbered from the first base id.
    """
    base = as_trades(base)
    if len(base) == 0 or not base.ts_ms[0] <= at_ms <= base.ts_ms[-1]:
        raise OutOfRangeError(f"at_ms={at_ms} outside the series")
    if rush_volume_scale == 0 or n_rush == 0:
        return base
    if n_rush > burst_ms:
        raise ValueError("more rush orders than milliseconds in the burst")
    cfg = PipelineConfig(chunk_seconds=chunk_seconds, window_seconds=2 * chunk_seconds)
    vol = chunk_series(base, None, cfg).quote_volume
    unit = float(np.median(vol))
    if unit == 0:
        unit = float(np.median(vol[vol > 0]))
    target = rush_volume_scale * unit

    rng = np.random.default_rng(seed)
    offsets = np.sort(rng.choice(burst_ms, size=n_rush, replace=False))
    j = int(np.searchsorted(base.ts_ms, at_ms, side="right")) - 1
    ref = float(base.price[max(j, 0)])

    ts, price, qty = [], [], []
    for r, off in enumerate(offsets):
        level = ref * (1.0 + price_jump * (r + 1) / n_rush)
        for f in range(fills_per_rush):
            p = level * (1.0 + 0.001 * f)
            ts.append(at_ms + int(off))
            price.append(p)
            qty.append(target / fills_per_rush / p)
    n_new = len(ts)

    all_ts = np.r_[base.ts_ms, np.array(ts, dtype=np.int64)]
    # base trades keep their relative order; injected fills follow base trades at the same ms
    rank = np.r_[np.arange(len(base)), len(base) + np.arange(n_new)]
    order = np.lexsort((rank, all_ts))
    price_all = np.r_[base.price, price]
    qty_all = np.r_[base.qty, qty]
    buy_all = np.r_[base.is_buy_taker, np.ones(n_new, dtype=bool)]
    pt = qt = None
    if base.price_text is not None and base.qty_text is not None:
        pt_all = list(base.price_text) + [repr(p) for p in price]
        qt_all = list(base.qty_text) + [repr(q) for q in qty]
        pt = [pt_all[i] for i in order]
        qt = [qt_all[i] for i in order]
    ids = int(base.trade_id[0]) + np.arange(len(order), dtype=np.int64)
    return Trades(ids, all_ts[order], price_all[order], qty_all[order], buy_all[order], pt, qt)
