"""Hourly-candle adaptive-threshold baseline.

A candle is flagged when both its close and its quote volume exceed their
trailing means by a configured factor. The presets share one lookback so the
flag sets nest (Strict within Balanced within Initial) on any input; their
numeric values are this package's defaults, not constants taken from elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..core import EmptyInputError, TradeRecord, Trades, UnsortedInputError, as_trades
from ..featurize import SeriesTooShortError

HOUR_MS = 3_600_000


@dataclass(frozen=True, slots=True)
class Candle:
    start_ms: int
    open: float
    high: float
    low: float
    close: float
    volume: float  # quote units


@dataclass(frozen=True)
class Candles:
    start_ms: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray

    def __len__(self) -> int:
        return len(self.start_ms)

    def __getitem__(self, i: int) -> Candle:
        return Candle(int(self.start_ms[i]), float(self.open[i]), float(self.high[i]),
                      float(self.low[i]), float(self.close[i]), float(self.volume[i]))

    def to_list(self) -> list[Candle]:
        return [self[i] for i in range(len(self))]


@dataclass(frozen=True)
class KampsConfig:
    lookback_hours: int = 12
    price_factor: float = 0.03
    volume_factor: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if self.lookback_hours < 1:
            raise ValueError("lookback_hours must be >= 1")
        if not (self.price_factor > 0 and self.volume_factor > 0):
            raise ValueError("factors must be positive")


INITIAL = KampsConfig(12, 0.03, 1.0, "initial")
BALANCED = KampsConfig(12, 0.05, 2.0, "balanced")
STRICT = KampsConfig(12, 0.10, 4.0, "strict")
PRESETS = {c.name: c for c in (INITIAL, BALANCED, STRICT)}


def build_candles(trades: Trades | Iterable[TradeRecord], width_ms: int = HOUR_MS) -> Candles:
    """OHLC and quote volume per ``width_ms`` bucket on the UTC-aligned grid.

    Buckets with no trades repeat the previous close with zero volume.
    """
    t = as_trades(trades)
    if len(t) == 0:
        raise EmptyInputError("no trades")
    if np.any(np.diff(t.ts_ms) < 0):
        raise UnsortedInputError("trades must be time-ordered")
    origin = (int(t.ts_ms[0]) // width_ms) * width_ms
    idx = (t.ts_ms - origin) // width_ms
    n = int(idx[-1]) + 1
    starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
    ends = np.r_[starts[1:], len(idx)] - 1
    occ = idx[starts]
    o = np.empty(n); h = np.empty(n); lo = np.empty(n); c = np.empty(n)
    o[occ] = t.price[starts]
    c[occ] = t.price[ends]
    h[occ] = np.maximum.reduceat(t.price, starts)
    lo[occ] = np.minimum.reduceat(t.price, starts)
    src = np.zeros(n, dtype=np.int64)
    src[occ] = occ
    np.maximum.accumulate(src, out=src)
    empty = np.ones(n, dtype=bool)
    empty[occ] = False
    fill = c[src[empty]]
    o[empty] = h[empty] = lo[empty] = c[empty] = fill
    vol = np.bincount(idx, weights=t.price * t.qty, minlength=n)
    return Candles(origin + np.arange(n, dtype=np.int64) * width_ms, o, h, lo, c, vol)


def kamps_detect(candles: Candles, config: KampsConfig = INITIAL) -> np.ndarray:
    """Boolean flag per candle; the first ``lookback_hours`` candles are never flagged."""
    L = config.lookback_hours
    n = len(candles)
    if n <= L:
        raise SeriesTooShortError(f"{n} candles, need more than {L}")
    csum = np.r_[0.0, np.cumsum(candles.close)]
    vsum = np.r_[0.0, np.cumsum(candles.volume)]
    i = np.arange(L, n)
    mean_close = (csum[i] - csum[i - L]) / L
    mean_vol = (vsum[i] - vsum[i - L]) / L
    flags = np.zeros(n, dtype=bool)
    flags[L:] = ((candles.close[L:] > (1 + config.price_factor) * mean_close)
                 & (candles.volume[L:] > (1 + config.volume_factor) * mean_vol))
    return flags
