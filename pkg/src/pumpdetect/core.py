"""Domain types shared by every stage of the detection pipeline.

Trade series are held column-wise in :class:`Trades` (numpy arrays) because a
two-week window on a liquid pair runs to millions of prints. Single records are
still available as :class:`TradeRecord` for validation and small fixtures.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

MS_PER_DAY = 86_400_000
MAX_GAP_MS = MS_PER_DAY

#: Column order of a feature vector. Feature importances are indexed by it.
FEATURE_NAMES: tuple[str, ...] = (
    "std_rush_orders",
    "avg_rush_orders",
    "std_trades",
    "std_volumes",
    "avg_volumes",
    "std_price",
    "avg_price",
    "avg_price_max",
    "avg_price_min",
)
N_FEATURES = len(FEATURE_NAMES)


class PipelineError(Exception):
    """Base class for errors raised by the pipeline."""


class UnsortedInputError(PipelineError, ValueError):
    pass


class EmptyInputError(PipelineError, ValueError):
    pass


@dataclass(frozen=True, slots=True)
class TradeRecord:
    """One trade print. ``is_buy_taker`` is true when the buyer was the aggressor."""

    trade_id: int
    ts_ms: int
    price: float
    qty: float
    is_buy_taker: bool

    def __post_init__(self) -> None:
        if not (self.price > 0 and self.qty > 0 and self.ts_ms > 0):
            raise ValueError(f"invalid trade {self!r}: price, qty and ts_ms must be positive")

    @property
    def quote_volume(self) -> float:
        return self.price * self.qty

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TradeRecord:
        return cls(int(d["trade_id"]), int(d["ts_ms"]), float(d["price"]), float(d["qty"]),
                   bool(d["is_buy_taker"]))


class Trades:
    """Column store for a trade series.

    ``price_text``/``qty_text`` optionally keep the decimal strings exactly as the
    exchange sent them so a series can be written back byte-for-byte.
    """

    __slots__ = ("trade_id", "ts_ms", "price", "qty", "is_buy_taker", "price_text", "qty_text")

    def __init__(self, trade_id, ts_ms, price, qty, is_buy_taker,
                 price_text: Sequence[str] | None = None, qty_text: Sequence[str] | None = None):
        self.trade_id = np.asarray(trade_id, dtype=np.int64)
        self.ts_ms = np.asarray(ts_ms, dtype=np.int64)
        self.price = np.asarray(price, dtype=np.float64)
        self.qty = np.asarray(qty, dtype=np.float64)
        self.is_buy_taker = np.asarray(is_buy_taker, dtype=bool)
        n = len(self.trade_id)
        if not all(len(a) == n for a in (self.ts_ms, self.price, self.qty, self.is_buy_taker)):
            raise ValueError("trade columns differ in length")
        self.price_text = list(price_text) if price_text is not None else None
        self.qty_text = list(qty_text) if qty_text is not None else None
        for arr in (self.trade_id, self.ts_ms, self.price, self.qty, self.is_buy_taker):
            arr.flags.writeable = False

    @classmethod
    def empty(cls) -> Trades:
        return cls([], [], [], [], [], [], [])

    @classmethod
    def from_records(cls, records: Iterable[TradeRecord]) -> Trades:
        records = list(records)
        return cls(
            [r.trade_id for r in records],
            [r.ts_ms for r in records],
            [r.price for r in records],
            [r.qty for r in records],
            [r.is_buy_taker for r in records],
        )

    def __len__(self) -> int:
        return len(self.trade_id)

    def __iter__(self) -> Iterator[TradeRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def record(self, i: int) -> TradeRecord:
        return TradeRecord(int(self.trade_id[i]), int(self.ts_ms[i]), float(self.price[i]),
                           float(self.qty[i]), bool(self.is_buy_taker[i]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trades):
            return NotImplemented
        return (len(self) == len(other)
                and np.array_equal(self.trade_id, other.trade_id)
                and np.array_equal(self.ts_ms, other.ts_ms)
                and np.array_equal(self.price, other.price)
                and np.array_equal(self.qty, other.qty)
                and np.array_equal(self.is_buy_taker, other.is_buy_taker))

    def __repr__(self) -> str:
        if len(self) == 0:
            return "Trades(n=0)"
        return f"Trades(n={len(self)}, ts=[{self.ts_ms[0]}..{self.ts_ms[-1]}])"

    @property
    def quote_volume(self) -> np.ndarray:
        return self.price * self.qty

    def take(self, idx) -> Trades:
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        pt = [self.price_text[i] for i in idx] if self.price_text is not None else None
        qt = [self.qty_text[i] for i in idx] if self.qty_text is not None else None
        return Trades(self.trade_id[idx], self.ts_ms[idx], self.price[idx], self.qty[idx],
                      self.is_buy_taker[idx], pt, qt)

    def between(self, start_ms: int, end_ms: int) -> Trades:
        """Trades with ``start_ms <= ts_ms < end_ms`` (series must be sorted)."""
        lo = int(np.searchsorted(self.ts_ms, start_ms, side="left"))
        hi = int(np.searchsorted(self.ts_ms, end_ms, side="left"))
        return self.take(np.arange(lo, hi))

    def is_sorted(self) -> bool:
        if len(self) < 2:
            return True
        dt = np.diff(self.ts_ms)
        if np.any(dt < 0):
            return False
        same = dt == 0
        return not np.any(np.diff(self.trade_id)[same] <= 0)

    def sorted(self) -> Trades:
        order = np.lexsort((self.trade_id, self.ts_ms))
        return self.take(order)

    @staticmethod
    def concat(parts: Sequence[Trades]) -> Trades:
        parts = [p for p in parts if len(p)]
        if not parts:
            return Trades.empty()
        keep_text = all(p.price_text is not None for p in parts)
        return Trades(
            np.concatenate([p.trade_id for p in parts]),
            np.concatenate([p.ts_ms for p in parts]),
            np.concatenate([p.price for p in parts]),
            np.concatenate([p.qty for p in parts]),
            np.concatenate([p.is_buy_taker for p in parts]),
            [s for p in parts for s in p.price_text] if keep_text else None,
            [s for p in parts for s in p.qty_text] if keep_text else None,
        )


def as_trades(trades: Trades | Iterable[TradeRecord]) -> Trades:
    if isinstance(trades, Trades):
        return trades
    return Trades.from_records(trades)


@dataclass(frozen=True, slots=True)
class RushOrder:
    """Buy-taker fills sharing one millisecond, read as a single market order."""

    ts_ms: int
    quote_volume: float
    n_fills: int

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RushOrder:
        return cls(int(d["ts_ms"]), float(d["quote_volume"]), int(d["n_fills"]))


@dataclass(frozen=True, slots=True)
class Chunk:
    start_ms: int
    width_s: int
    n_trades: int
    quote_volume: float
    rush_volume: float
    close: float
    price_max: float
    price_min: float

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Chunk:
        return cls(int(d["start_ms"]), int(d["width_s"]), int(d["n_trades"]),
                   float(d["quote_volume"]), float(d["rush_volume"]), float(d["close"]),
                   float(d["price_max"]), float(d["price_min"]))


@dataclass(frozen=True, slots=True)
class FeatureVector:
    chunk_start_ms: int
    std_rush_orders: float
    avg_rush_orders: float
    std_trades: float
    std_volumes: float
    avg_volumes: float
    std_price: float
    avg_price: float
    avg_price_max: float
    avg_price_min: float
    label: bool = False

    def values(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=np.float64)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> FeatureVector:
        return cls(int(d["chunk_start_ms"]), *(float(d[n]) for n in FEATURE_NAMES),
                   label=bool(d.get("label", False)))


@dataclass(frozen=True, slots=True)
class PumpEvent:
    symbol: str
    exchange: str
    signal_ts_ms: int
    group: str | None = None

    def __post_init__(self) -> None:
        if self.signal_ts_ms <= 0:
            raise ValueError("signal_ts_ms must be positive")

    @property
    def signal_day(self) -> int:
        """UTC day number (days since the epoch) of the signal."""
        return self.signal_ts_ms // MS_PER_DAY

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> PumpEvent:
        group = d.get("group") or None
        return cls(str(d["symbol"]), str(d["exchange"]), int(d["signal_ts_ms"]), group)


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    """Chunk and window geometry plus the post-alert pause.

    ``window_includes_current`` selects whether the window for chunk ``i`` is
    ``[i-k+1, i]`` (default) or ``[i-k, i-1]``. ``rush_min_fills`` drops rush
    orders with fewer fills from the rush volume (1 keeps every buy-taker millisecond).
    """

    chunk_seconds: int = 25
    window_seconds: int = 25_200
    cooldown_seconds: int = 1800
    window_includes_current: bool = True
    rush_min_fills: int = 1

    def __post_init__(self) -> None:
        if self.chunk_seconds <= 0 or self.window_seconds <= 0 or self.cooldown_seconds <= 0:
            raise ValueError("chunk, window and cooldown lengths must be positive")
        if self.window_seconds % self.chunk_seconds:
            raise ValueError("window_seconds must be a multiple of chunk_seconds")
        if self.window_seconds < 2 * self.chunk_seconds:
            raise ValueError("window must span at least two chunks")
        if self.rush_min_fills < 1:
            raise ValueError("rush_min_fills must be >= 1")

    @property
    def chunk_ms(self) -> int:
        return self.chunk_seconds * 1000

    @property
    def window_chunks(self) -> int:
        return self.window_seconds // self.chunk_seconds

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> PipelineConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True, slots=True)
class DetectionAlert:
    symbol: str
    chunk_start_ms: int
    score: float
    model_id: str

    def to_dict(self) -> dict[str, Any]:
        return {"symbol": self.symbol, "chunk_start_ms": self.chunk_start_ms,
                "score": self.score, "model_id": self.model_id}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> DetectionAlert:
        return cls(str(d["symbol"]), int(d["chunk_start_ms"]), float(d["score"]), str(d["model_id"]))


@dataclass(frozen=True, slots=True)
class Violation:
    kind: str  # ordering | duplicate_id | non_positive | gap
    index: int
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    n_records: int
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def clean(self) -> bool:
        return not self.violations

    def count(self, kind: str) -> int:
        return sum(v.kind == kind for v in self.violations)


def validate_trade_series(trades: Trades | Iterable[TradeRecord]) -> ValidationReport:
    """Report ordering problems, duplicate ids, bad values and gaps over 24h.

    Never raises on bad data; a record that fails :class:`TradeRecord`'s own
    checks can only reach here through :class:`Trades`, so values are rechecked.
    """
    t = as_trades(trades)
    out: list[Violation] = []
    n = len(t)
    for i in np.flatnonzero((t.price <= 0) | (t.qty <= 0) | (t.ts_ms <= 0)):
        out.append(Violation("non_positive", int(i), f"price={t.price[i]} qty={t.qty[i]} ts={t.ts_ms[i]}"))
    if n >= 2:
        dt = np.diff(t.ts_ms)
        did = np.diff(t.trade_id)
        for i in np.flatnonzero(dt < 0):
            out.append(Violation("ordering", int(i) + 1, f"ts {t.ts_ms[i]} -> {t.ts_ms[i + 1]}"))
        for i in np.flatnonzero((did < 0) & (dt >= 0)):
            out.append(Violation("ordering", int(i) + 1, f"trade_id {t.trade_id[i]} -> {t.trade_id[i + 1]}"))
        for i in np.flatnonzero(dt > MAX_GAP_MS):
            out.append(Violation("gap", int(i) + 1, f"{int(dt[i])} ms without trades"))
    ids, first, counts = np.unique(t.trade_id, return_index=True, return_counts=True)
    for tid, i in zip(ids[counts > 1], first[counts > 1]):
        out.append(Violation("duplicate_id", int(i), f"trade_id {tid} repeated"))
    out.sort(key=lambda v: (v.index, v.kind))
    return ValidationReport(n, tuple(out))
