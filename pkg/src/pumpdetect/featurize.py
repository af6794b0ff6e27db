"""Rush-order inference, chunking and moving-window features."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import (
    FEATURE_NAMES,
    N_FEATURES,
    Chunk,
    EmptyInputError,
    FeatureVector,
    PipelineConfig,
    PipelineError,
    PumpEvent,
    RushOrder,
    TradeRecord,
    Trades,
    UnsortedInputError,
    as_trades,
)

log = logging.getLogger(__name__)

# rows of the sliding-window matrix processed at once; bounds peak memory
_BLOCK_ROWS = 2048


class SeriesTooShortError(PipelineError, ValueError):
    pass


@dataclass(frozen=True)
class RushOrders:
    """Column form of a rush-order sequence."""

    ts_ms: np.ndarray
    quote_volume: np.ndarray
    n_fills: np.ndarray

    def __len__(self) -> int:
        return len(self.ts_ms)

    def __iter__(self):
        for t, v, n in zip(self.ts_ms, self.quote_volume, self.n_fills):
            yield RushOrder(int(t), float(v), int(n))

    def to_list(self) -> list[RushOrder]:
        return list(self)


def rush_orders(trades: Trades | Iterable[TradeRecord]) -> RushOrders:
    """Array form of :func:`infer_rush_orders`."""
    t = as_trades(trades)
    if not t.is_sorted():
        raise UnsortedInputError("trades must be sorted by (ts_ms, trade_id)")
    buy = t.is_buy_taker
    ts = t.ts_ms[buy]
    qv = (t.price * t.qty)[buy]
    if len(ts) == 0:
        return RushOrders(np.empty(0, np.int64), np.empty(0), np.empty(0, np.int64))
    new = np.empty(len(ts), dtype=bool)
    new[0] = True
    np.not_equal(ts[1:], ts[:-1], out=new[1:])
    group = np.cumsum(new) - 1
    return RushOrders(ts[new], np.bincount(group, weights=qv), np.bincount(group))


def infer_rush_orders(trades: Trades | Iterable[TradeRecord]) -> list[RushOrder]:
    """Collapse buy-taker fills at the same millisecond into one rush order each.

    Sell-taker trades are ignored. Raises :class:`UnsortedInputError` when the
    input is not ordered by ``(ts_ms, trade_id)``.
    """
    return rush_orders(trades).to_list()


@dataclass(frozen=True)
class ChunkSeries:
    """Contiguous fixed-width chunks, stored column-wise."""

    start_ms: np.ndarray
    width_s: int
    n_trades: np.ndarray
    quote_volume: np.ndarray
    rush_volume: np.ndarray
    close: np.ndarray
    price_max: np.ndarray
    price_min: np.ndarray

    def __len__(self) -> int:
        return len(self.start_ms)

    def __getitem__(self, i: int) -> Chunk:
        return Chunk(int(self.start_ms[i]), self.width_s, int(self.n_trades[i]),
                     float(self.quote_volume[i]), float(self.rush_volume[i]),
                     float(self.close[i]), float(self.price_max[i]), float(self.price_min[i]))

    def chunks(self) -> list[Chunk]:
        return [self[i] for i in range(len(self))]

    @classmethod
    def from_chunks(cls, chunks: Sequence[Chunk]) -> ChunkSeries:
        if not chunks:
            raise EmptyInputError("no chunks")
        width = chunks[0].width_s
        col = lambda name, dt=np.float64: np.array([getattr(c, name) for c in chunks], dtype=dt)
        return cls(col("start_ms", np.int64), width, col("n_trades", np.int64), col("quote_volume"),
                   col("rush_volume"), col("close"), col("price_max"), col("price_min"))

    def slice(self, lo: int, hi: int) -> ChunkSeries:
        return dataclasses.replace(
            self, **{f.name: getattr(self, f.name)[lo:hi]
                     for f in dataclasses.fields(self) if f.name != "width_s"})


def chunk_series(trades: Trades | Iterable[TradeRecord], rush: RushOrders | Sequence[RushOrder] | None,
                 config: PipelineConfig) -> ChunkSeries:
    """Partition a sorted trade series into ``config.chunk_seconds`` chunks.

    The grid is anchored at the floor of the first trade's timestamp, chunks are
    half-open ``[start, start + s)``, and empty chunks carry the previous close
    forward with zero volumes. ``rush`` may be ``None`` to infer it here.
    """
    t = as_trades(trades)
    if len(t) == 0:
        raise EmptyInputError("cannot chunk an empty trade series")
    if not t.is_sorted():
        raise UnsortedInputError("trades must be sorted by (ts_ms, trade_id)")
    if rush is None:
        rush = rush_orders(t)
    elif not isinstance(rush, RushOrders):
        rush = RushOrders(np.array([r.ts_ms for r in rush], dtype=np.int64),
                          np.array([r.quote_volume for r in rush], dtype=np.float64),
                          np.array([r.n_fills for r in rush], dtype=np.int64))

    width = config.chunk_ms
    origin = (int(t.ts_ms[0]) // width) * width
    idx = (t.ts_ms - origin) // width
    n = int(idx[-1]) + 1

    n_trades = np.bincount(idx, minlength=n)
    quote_volume = np.bincount(idx, weights=t.price * t.qty, minlength=n)

    keep = rush.n_fills >= config.rush_min_fills
    ridx = (rush.ts_ms[keep] - origin) // width
    if len(ridx) and (ridx[0] < 0 or ridx[-1] >= n):
        raise ValueError("rush orders fall outside the trade series")
    rush_volume = np.bincount(ridx, weights=rush.quote_volume[keep], minlength=n).astype(np.float64)

    starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
    ends = np.r_[starts[1:], len(idx)] - 1
    occupied = idx[starts]
    close = np.empty(n)
    pmax = np.empty(n)
    pmin = np.empty(n)
    close[occupied] = t.price[ends]
    pmax[occupied] = np.maximum.reduceat(t.price, starts)
    pmin[occupied] = np.minimum.reduceat(t.price, starts)

    # forward-fill empty chunks from the last occupied one
    src = np.zeros(n, dtype=np.int64)
    src[occupied] = occupied
    np.maximum.accumulate(src, out=src)
    empty = n_trades == 0
    close[empty] = close[src[empty]]
    pmax[empty] = close[empty]
    pmin[empty] = close[empty]

    return ChunkSeries(origin + np.arange(n, dtype=np.int64) * width, config.chunk_seconds,
                       n_trades.astype(np.int64), quote_volume, rush_volume, close, pmax, pmin)


def window_mean_std(values: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population std over every length-``k`` window of ``values``.

    Two-pass per window, computed on blocks of windows. Constant windows
    (a carried-forward price, say) get exactly their value and a zero std
    rather than rounding residue. The streaming engine calls this on its
    k-chunk buffer so batch and streaming agree bit for bit.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    view = sliding_window_view(values, k)
    m = view.shape[0]
    mean = np.empty(m)
    std = np.empty(m)
    for lo in range(0, m, _BLOCK_ROWS):
        block = view[lo:lo + _BLOCK_ROWS]
        mu = block.sum(axis=1) / k
        dev = block - mu[:, None]
        sd = np.sqrt((dev * dev).sum(axis=1) / k)
        flat = block.min(axis=1) == block.max(axis=1)
        mean[lo:lo + _BLOCK_ROWS] = np.where(flat, block[:, 0], mu)
        std[lo:lo + _BLOCK_ROWS] = np.where(flat, 0.0, sd)
    return mean, std


def window_feature_matrix(rush_volume, n_trades, quote_volume, close, price_max, price_min,
                          k: int) -> np.ndarray:
    """Feature rows for every full window over the given per-chunk columns."""
    avg_rush, std_rush = window_mean_std(rush_volume, k)
    _, std_trades = window_mean_std(np.asarray(n_trades, dtype=np.float64), k)
    avg_vol, std_vol = window_mean_std(quote_volume, k)
    avg_price, std_price = window_mean_std(close, k)
    avg_pmax, _ = window_mean_std(price_max, k)
    avg_pmin, _ = window_mean_std(price_min, k)
    cols = (std_rush, avg_rush, std_trades, std_vol, avg_vol, std_price, avg_price, avg_pmax, avg_pmin)
    X = np.column_stack(cols)
    assert X.shape[1] == N_FEATURES
    return X


def feature_rows(series: ChunkSeries, config: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    """Array form of :func:`moving_features`: ``(X, chunk_start_ms)``."""
    k = config.window_chunks
    lag = 0 if config.window_includes_current else 1
    n = len(series)
    if n < k + lag:
        raise SeriesTooShortError(f"series has {n} chunks, window needs {k + lag}")
    hi = n - lag
    X = window_feature_matrix(series.rush_volume[:hi], series.n_trades[:hi], series.quote_volume[:hi],
                              series.close[:hi], series.price_max[:hi], series.price_min[:hi], k)
    return X, series.start_ms[k - 1 + lag:]


def moving_features(series: ChunkSeries, config: PipelineConfig) -> list[FeatureVector]:
    """One unlabeled :class:`FeatureVector` per chunk that has a full window behind it."""
    X, starts = feature_rows(series, config)
    return [FeatureVector(int(t), *map(float, row)) for t, row in zip(starts, X)]


def label_array(chunk_start_ms: np.ndarray, events: Iterable[PumpEvent], chunk_ms: int) -> np.ndarray:
    """Boolean labels: true where a signal timestamp falls inside ``[start, start + chunk_ms)``."""
    starts = np.asarray(chunk_start_ms, dtype=np.int64)
    y = np.zeros(len(starts), dtype=bool)
    for ev in events:
        i = int(np.searchsorted(starts, ev.signal_ts_ms, side="right")) - 1
        if i < 0 or ev.signal_ts_ms >= starts[i] + chunk_ms:
            log.warning("event %s @ %d outside the labelled series; skipped", ev.symbol, ev.signal_ts_ms)
            continue
        y[i] = True
    return y


def label_chunks(vectors: Sequence[FeatureVector], events: Iterable[PumpEvent],
                 config: PipelineConfig) -> list[FeatureVector]:
    """Return copies of ``vectors`` with ``label`` set from the event signals.

    The vectors must be consecutive chunks of one symbol. Events whose signal
    does not fall in any vector's chunk are logged and skipped.
    """
    starts = np.array([v.chunk_start_ms for v in vectors], dtype=np.int64)
    y = label_array(starts, events, config.chunk_ms)
    return [dataclasses.replace(v, label=bool(lab)) for v, lab in zip(vectors, y)]


@dataclass(frozen=True)
class LabeledFeatures:
    """Feature matrix of one series plus labels and chunk start times."""

    symbol: str
    X: np.ndarray
    y: np.ndarray
    chunk_start_ms: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    def vectors(self) -> list[FeatureVector]:
        return [FeatureVector(int(t), *map(float, row), label=bool(lab))
                for t, row, lab in zip(self.chunk_start_ms, self.X, self.y)]


def featurize(trades: Trades | Iterable[TradeRecord], config: PipelineConfig,
              events: Iterable[PumpEvent] = (), symbol: str = "") -> LabeledFeatures:
    """Trades to labeled feature rows in one call."""
    t = as_trades(trades)
    series = chunk_series(t, rush_orders(t), config)
    X, starts = feature_rows(series, config)
    y = label_array(starts, list(events), config.chunk_ms)
    return LabeledFeatures(symbol, X, y, starts)


__all__ = [
    "FEATURE_NAMES", "ChunkSeries", "LabeledFeatures", "RushOrders", "SeriesTooShortError",
    "chunk_series", "feature_rows", "featurize", "infer_rush_orders", "label_array",
    "label_chunks", "moving_features", "rush_orders", "window_feature_matrix", "window_mean_std",
]
