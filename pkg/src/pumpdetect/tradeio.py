"""CSV / JSON file formats read and written by the pipeline."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

from .core import (
    FEATURE_NAMES,
    DetectionAlert,
    FeatureVector,
    PipelineError,
    PumpEvent,
    Trades,
)

TRADE_HEADER = ("trade_id", "ts_ms", "price", "qty", "is_buy_taker")
EVENT_HEADER = ("symbol", "exchange", "signal_ts_ms", "group")
FEATURE_HEADER = ("chunk_start_ms", *FEATURE_NAMES, "label")

_TRUE = {"true", "1", "t", "yes"}
_FALSE = {"false", "0", "f", "no"}


class MalformedLineError(PipelineError, ValueError):
    def __init__(self, path, lineno: int, reason: str):
        super().__init__(f"{path}:{lineno}: {reason}")
        self.path = path
        self.lineno = lineno


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_bool(s: str) -> bool:
    s = s.strip().lower()
    if s in _TRUE:
        return True
    if s in _FALSE:
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _fmt_float(x: float) -> str:
    return repr(float(x))


def format_trades_csv(trades: Trades) -> str:
    buf = io.StringIO()
    buf.write(",".join(TRADE_HEADER) + "\n")
    pt = trades.price_text
    qt = trades.qty_text
    for i in range(len(trades)):
        price = pt[i] if pt is not None else _fmt_float(trades.price[i])
        qty = qt[i] if qt is not None else _fmt_float(trades.qty[i])
        buy = "true" if trades.is_buy_taker[i] else "false"
        buf.write(f"{trades.trade_id[i]},{trades.ts_ms[i]},{price},{qty},{buy}\n")
    return buf.getvalue()


def write_trades(path: str | os.PathLike, trades: Trades) -> None:
    atomic_write_text(path, format_trades_csv(trades))


def iter_trade_rows(path: str | os.PathLike) -> Iterator[tuple[int, int, str, str, bool]]:
    """Yield ``(trade_id, ts_ms, price_text, qty_text, is_buy_taker)`` per data line.

    Raises :class:`MalformedLineError` carrying the 1-based line number.
    """
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if tuple(h.strip() for h in header.split(",")) != TRADE_HEADER:
            raise MalformedLineError(path, 1, f"unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise MalformedLineError(path, lineno, f"expected 5 fields, got {len(parts)}")
            try:
                tid, ts, price, qty = int(parts[0]), int(parts[1]), parts[2], parts[3]
                p, q = float(price), float(qty)
                buy = _parse_bool(parts[4])
            except ValueError as exc:
                raise MalformedLineError(path, lineno, str(exc)) from None
            if not (p > 0 and q > 0 and ts > 0):
                raise MalformedLineError(path, lineno, "price, qty and ts_ms must be positive")
            yield tid, ts, price, qty, buy


def read_trades(path: str | os.PathLike) -> Trades:
    rows = list(iter_trade_rows(path))
    if not rows:
        return Trades.empty()
    tid, ts, pt, qt, buy = zip(*rows)
    return Trades(tid, ts, [float(x) for x in pt], [float(x) for x in qt], buy, pt, qt)


def read_events(path: str | os.PathLike) -> list[PumpEvent]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(EVENT_HEADER[:3]) - set(reader.fieldnames or ())
        if missing:
            raise MalformedLineError(path, 1, f"missing columns {sorted(missing)}")
        events = [PumpEvent.from_dict(row) for row in reader]
    seen = set()
    for e in events:
        key = (e.symbol, e.signal_ts_ms)
        if key in seen:
            raise ValueError(f"duplicate event {key}")
        seen.add(key)
    return events


def write_events(path: str | os.PathLike, events: Iterable[PumpEvent]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENT_HEADER)
    for e in events:
        w.writerow([e.symbol, e.exchange, e.signal_ts_ms, e.group or ""])
    atomic_write_text(path, buf.getvalue())


def write_features(path: str | os.PathLike, vectors: Sequence[FeatureVector]) -> None:
    buf = io.StringIO()
    buf.write(",".join(FEATURE_HEADER) + "\n")
    for v in vectors:
        vals = ",".join(_fmt_float(getattr(v, n)) for n in FEATURE_NAMES)
        buf.write(f"{v.chunk_start_ms},{vals},{'true' if v.label else 'false'}\n")
    atomic_write_text(path, buf.getvalue())


def read_features(path: str | os.PathLike) -> list[FeatureVector]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != FEATURE_HEADER:
            raise MalformedLineError(path, 1, "unexpected feature header")
        return [FeatureVector(int(r["chunk_start_ms"]), *(float(r[n]) for n in FEATURE_NAMES),
                              label=_parse_bool(r["label"])) for r in reader]


def feature_matrix(vectors: Sequence[FeatureVector]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(X, y, chunk_start_ms)`` arrays for a list of feature vectors."""
    if not vectors:
        return np.empty((0, len(FEATURE_NAMES))), np.empty(0, dtype=bool), np.empty(0, dtype=np.int64)
    X = np.array([[getattr(v, n) for n in FEATURE_NAMES] for v in vectors], dtype=np.float64)
    y = np.array([v.label for v in vectors], dtype=bool)
    t = np.array([v.chunk_start_ms for v in vectors], dtype=np.int64)
    return X, y, t


def write_pr_curve(path: str | os.PathLike, thresholds, precision, recall) -> None:
    buf = io.StringIO()
    buf.write("threshold,precision,recall\n")
    for t, p, r in zip(thresholds, precision, recall):
        buf.write(f"{_fmt_float(t)},{_fmt_float(p)},{_fmt_float(r)}\n")
    atomic_write_text(path, buf.getvalue())


def format_alert(alert: DetectionAlert) -> str:
    return json.dumps(alert.to_dict(), separators=(",", ":"))


def write_alerts(path: str | os.PathLike, alerts: Iterable[DetectionAlert]) -> None:
    atomic_write_text(path, "".join(format_alert(a) + "\n" for a in alerts))


def read_alerts(path: str | os.PathLike) -> list[DetectionAlert]:
    with open(path) as fh:
        return [DetectionAlert.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_json(path: str | os.PathLike, doc: Any) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_json(path: str | os.PathLike) -> Any:
    with open(path) as fh:
        return json.load(fh)
