"""Historical trade download and per-event dataset assembly.

The client speaks the aggregated-trades REST shape (``fromId`` cursor, fixed
page size). Base URL, page size, rate limit, retry budget and the JSON field
names all come from :class:`ClientConfig`.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import requests

from .core import MS_PER_DAY, PipelineError, PumpEvent, Trades
from .tradeio import atomic_write_text, read_trades, write_trades

log = logging.getLogger(__name__)

HOUR_MS = 3_600_000


@dataclass(frozen=True)
class ClientConfig:
    base_url: str = "https://api.binance.com"
    path: str = "/api/v3/aggTrades"
    page_size: int = 1000
    requests_per_minute: float = 600.0
    max_retries: int = 5
    backoff_base_s: float = 0.5
    backoff_max_s: float = 30.0
    timeout_s: float = 10.0
    # response field names
    id_field: str = "a"
    ts_field: str = "T"
    price_field: str = "p"
    qty_field: str = "q"
    side_field: str = "m"
    side_is_buyer_maker: bool = True

    @classmethod
    def from_env(cls, prefix: str = "PUMPDETECT_", **overrides) -> ClientConfig:
        """Read ``PUMPDETECT_BASE_URL``, ``_REQUESTS_PER_MINUTE``, ``_PAGE_SIZE``, ``_MAX_RETRIES``."""
        env = {}
        for f in dataclasses.fields(cls):
            raw = os.environ.get(prefix + f.name.upper())
            if raw is None:
                continue
            typ = type(getattr(cls, f.name))
            env[f.name] = raw.lower() in ("1", "true", "yes") if typ is bool else typ(raw)
        env.update(overrides)
        return cls(**env)


@dataclass
class FetchCheckpoint:
    """Where an aborted fetch stopped; pass it back as ``resume=`` to continue."""

    symbol: str
    start_ms: int
    end_ms: int
    next_from_id: int | None
    scan_from_ms: int
    fetched: Trades

    def to_dict(self) -> dict[str, Any]:
        return {"symbol": self.symbol, "start_ms": self.start_ms, "end_ms": self.end_ms,
                "next_from_id": self.next_from_id, "scan_from_ms": self.scan_from_ms,
                "n_fetched": len(self.fetched)}


class FetchError(PipelineError):
    def __init__(self, msg: str, checkpoint: FetchCheckpoint | None = None):
        super().__init__(msg)
        self.checkpoint = checkpoint


class NetworkExhaustedError(FetchError):
    pass


class SymbolUnknownError(FetchError):
    pass


class GapDetectedError(FetchError):
    pass


class _Transient(Exception):
    def __init__(self, msg: str, retry_after: float | None = None):
        super().__init__(msg)
        self.retry_after = retry_after


class RateLimiter:
    """Spaces calls at least ``60 / requests_per_minute`` seconds apart."""

    def __init__(self, requests_per_minute: float, clock=time.monotonic, sleep=time.sleep):
        self.interval = 60.0 / requests_per_minute if requests_per_minute > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._next = 0.0
        self._lock = threading.Lock()

    def wait(self) -> None:
        with self._lock:
            now = self._clock()
            if now < self._next:
                self._sleep(self._next - now)
                now = self._next
            self._next = now + self.interval


class TradeClient:
    def __init__(self, config: ClientConfig = ClientConfig(), session: requests.Session | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.session = session or requests.Session()
        self._sleep = sleep
        self.limiter = RateLimiter(config.requests_per_minute, sleep=sleep)
        self.n_requests = 0

    def _get_once(self, params: dict[str, Any]) -> list[dict[str, Any]]:
        self.limiter.wait()
        self.n_requests += 1
        try:
            resp = self.session.get(self.config.base_url.rstrip("/") + self.config.path,
                                    params=params, timeout=self.config.timeout_s)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise _Transient(str(exc)) from None
        if resp.status_code in (418, 429) or resp.status_code >= 500:
            ra = resp.headers.get("Retry-After")
            raise _Transient(f"HTTP {resp.status_code}", float(ra) if ra else None)
        if 400 <= resp.status_code < 500:
            raise SymbolUnknownError(f"HTTP {resp.status_code} for {params.get('symbol')}: {resp.text[:200]}")
        return resp.json()

    def get_page(self, params: dict[str, Any], checkpoint: FetchCheckpoint) -> list[dict[str, Any]]:
        """One page with exponential backoff on transient failures."""
        cfg = self.config
        for attempt in range(cfg.max_retries + 1):
            try:
                return self._get_once(params)
            except _Transient as exc:
                if attempt == cfg.max_retries:
                    raise NetworkExhaustedError(f"retries exhausted: {exc}", checkpoint) from None
                delay = exc.retry_after or min(cfg.backoff_base_s * 2 ** attempt, cfg.backoff_max_s)
                log.warning("transient failure (%s); retry %d in %.2fs", exc, attempt + 1, delay)
                self._sleep(delay)
            except SymbolUnknownError as exc:
                exc.checkpoint = checkpoint
                raise
        raise AssertionError("unreachable")

    def _rows(self, page: list[dict[str, Any]]) -> list[tuple[int, int, str, str, bool]]:
        c = self.config
        out = []
        for row in page:
            side = bool(row[c.side_field])
            buy_taker = not side if c.side_is_buyer_maker else side
            out.append((int(row[c.id_field]), int(row[c.ts_field]), str(row[c.price_field]),
                        str(row[c.qty_field]), buy_taker))
        return out

    def fetch_trades(self, symbol: str, start_ms: int, end_ms: int,
                     resume: FetchCheckpoint | None = None) -> Trades:
        """All trades with ``start_ms <= ts < end_ms``, sorted by ``(ts_ms, trade_id)``.

        The first page is located by time (one-hour probes until a trade turns
        up), later pages follow the id cursor. Failures raise a :class:`FetchError`
        whose ``checkpoint`` resumes the download.
        """
        if not start_ms < end_ms:
            raise ValueError("start_ms must be < end_ms")
        rows: list[tuple[int, int, str, str, bool]] = []
        if resume is not None:
            prior = resume.fetched
            if len(prior):
                rows = list(zip(prior.trade_id.tolist(), prior.ts_ms.tolist(), prior.price_text,
                                prior.qty_text, prior.is_buy_taker.tolist()))
            next_id, scan = resume.next_from_id, resume.scan_from_ms
        else:
            next_id, scan = None, start_ms
        size = self.config.page_size

        def checkpoint() -> FetchCheckpoint:
            return FetchCheckpoint(symbol, start_ms, end_ms, next_id, scan, _to_trades(rows))

        done = False
        while next_id is None and scan < end_ms:
            hi = min(scan + HOUR_MS, end_ms)
            page = self._rows(self.get_page({"symbol": symbol, "startTime": scan, "endTime": hi - 1,
                                             "limit": size}, checkpoint()))
            if page:
                done = self._take(page, rows, start_ms, end_ms, None)
                next_id = page[-1][0] + 1
                if done or len(page) < size and hi >= end_ms:
                    return _to_trades(rows)
            else:
                scan = hi
        if next_id is None:
            return _to_trades(rows)
        while True:
            page = self._rows(self.get_page({"symbol": symbol, "fromId": next_id, "limit": size},
                                            checkpoint()))
            if not page:
                break
            try:
                done = self._take(page, rows, start_ms, end_ms, next_id)
            except GapDetectedError as exc:
                exc.checkpoint = checkpoint()
                raise
            next_id = page[-1][0] + 1
            if done or len(page) < size:
                break
        return _to_trades(rows)

    @staticmethod
    def _take(page, rows, start_ms, end_ms, expect_id) -> bool:
        """Append in-range rows; True once a row at or past ``end_ms`` shows up."""
        for r in page:
            if expect_id is not None and r[0] != expect_id:
                raise GapDetectedError(f"expected id {expect_id}, got {r[0]}")
            expect_id = r[0] + 1
            if r[1] >= end_ms:
                return True
            if r[1] >= start_ms:
                rows.append(r)
        return False


def _to_trades(rows) -> Trades:
    if not rows:
        return Trades.empty()
    rows = sorted(rows, key=lambda r: (r[1], r[0]))
    tid, ts, pt, qt, buy = zip(*rows)
    return Trades(tid, ts, [float(x) for x in pt], [float(x) for x in qt], buy, pt, qt)


def fetch_trades(symbol: str, start_ms: int, end_ms: int, client_config: ClientConfig = ClientConfig()) -> Trades:
    return TradeClient(client_config).fetch_trades(symbol, start_ms, end_ms)


# ---------------------------------------------------------------- datasets

def merge_day_ranges(ranges: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    """Union of half-open day ranges; overlapping or touching ranges merge."""
    out: list[list[int]] = []
    for lo, hi in sorted(ranges):
        if out and lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [(a, b) for a, b in out]


def event_day_range(event: PumpEvent, days_before: int = 7, days_after: int = 7) -> tuple[int, int]:
    d = event.signal_day
    return d - days_before, d + days_after


def _day_str(day: int) -> str:
    return datetime.fromtimestamp(day * 86400, tz=timezone.utc).strftime("%Y-%m-%d")


def _day_from_str(s: str) -> int:
    dt = datetime.strptime(s, "%Y-%m-%d").replace(tzinfo=timezone.utc)
    return int(dt.timestamp()) // 86400


def _safe(symbol: str) -> str:
    return re.sub(r"[^A-Za-z0-9_-]+", "-", symbol)


@dataclass
class TradeFileEntry:
    symbol: str
    start_day: int  # inclusive, UTC day number
    end_day: int  # exclusive
    path: str  # relative to the manifest directory
    n_trades: int
    fetched_at_ms: int

    def covers(self, lo_ms: int, hi_ms: int) -> bool:
        return self.start_day * MS_PER_DAY <= lo_ms and hi_ms <= self.end_day * MS_PER_DAY

    def to_dict(self) -> dict[str, Any]:
        return {"symbol": self.symbol, "start": _day_str(self.start_day), "end": _day_str(self.end_day),
                "path": self.path, "n_trades": self.n_trades, "fetched_at_ms": self.fetched_at_ms}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TradeFileEntry:
        return cls(d["symbol"], _day_from_str(d["start"]), _day_from_str(d["end"]), d["path"],
                   int(d["n_trades"]), int(d["fetched_at_ms"]))


class EventNotFoundError(PipelineError, KeyError):
    pass


class PartialCoverageError(PipelineError, ValueError):
    pass


class DatasetBuildError(PipelineError):
    def __init__(self, msg: str, manifest: DatasetManifest):
        super().__init__(msg)
        self.manifest = manifest


@dataclass
class DatasetManifest:
    events: list[PumpEvent]
    files: list[TradeFileEntry]
    event_files: dict[str, str] = field(default_factory=dict)  # event key -> file path
    errors: list[str] = field(default_factory=list)
    root: Path = field(default=Path("."), compare=False)

    @staticmethod
    def key(event: PumpEvent) -> str:
        return f"{event.symbol}@{event.signal_ts_ms}"

    def covered_days(self, symbol: str) -> list[tuple[int, int]]:
        return sorted((f.start_day, f.end_day) for f in self.files if f.symbol == symbol)

    def file_for(self, event: PumpEvent) -> TradeFileEntry:
        path = self.event_files.get(self.key(event))
        if path is None:
            raise EventNotFoundError(self.key(event))
        return next(f for f in self.files if f.path == path)

    def to_dict(self) -> dict[str, Any]:
        return {"format_version": 1, "events": [e.to_dict() for e in self.events],
                "files": [f.to_dict() for f in self.files], "event_files": self.event_files,
                "errors": self.errors}

    def save(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> DatasetManifest:
        with open(path) as fh:
            d = json.load(fh)
        return cls([PumpEvent.from_dict(e) for e in d["events"]],
                   [TradeFileEntry.from_dict(f) for f in d["files"]],
                   dict(d.get("event_files", {})), list(d.get("errors", [])), Path(path).parent)


Fetcher = Callable[[str, int, int], Trades]


def build_event_dataset(events: Sequence[PumpEvent], fetch: Fetcher, out_dir: str | os.PathLike,
                        days_before: int = 7, days_after: int = 7, max_workers: int = 4,
                        clock: Callable[[], float] = time.time) -> DatasetManifest:
    """Download ``days_before``/``days_after`` days around every event into ``out_dir``.

    Windows of the same symbol are merged at day granularity so no day is
    stored twice. Symbols are fetched concurrently. The manifest is written to
    ``out_dir/manifest.json`` even when some fetches fail; failures are then
    raised together as :class:`DatasetBuildError`.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_symbol: dict[str, list[PumpEvent]] = {}
    for e in events:
        by_symbol.setdefault(e.symbol, []).append(e)

    def build_symbol(symbol: str):
        evs = by_symbol[symbol]
        entries, errors = [], []
        for lo, hi in merge_day_ranges(event_day_range(e, days_before, days_after) for e in evs):
            name = f"{_safe(symbol)}_{_day_str(lo)}_{_day_str(hi)}.csv"
            try:
                trades = fetch(symbol, lo * MS_PER_DAY, hi * MS_PER_DAY)
            except Exception as exc:  # reported in the manifest, re-raised below
                errors.append(f"{symbol} {_day_str(lo)}..{_day_str(hi)}: {type(exc).__name__}: {exc}")
                continue
            write_trades(out / name, trades)
            entries.append(TradeFileEntry(symbol, lo, hi, name, len(trades), int(clock() * 1000)))
        return entries, errors

    files: list[TradeFileEntry] = []
    errors: list[str] = []
    symbols = sorted(by_symbol)
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as ex:
        for entries, errs in ex.map(build_symbol, symbols):
            files.extend(entries)
            errors.extend(errs)

    event_files = {}
    for e in events:
        for f in files:
            if f.symbol == e.symbol and f.start_day <= e.signal_day < f.end_day:
                event_files[DatasetManifest.key(e)] = f.path
    manifest = DatasetManifest(list(events), files, event_files, errors, out)
    manifest.save(out / "manifest.json")
    if errors:
        raise DatasetBuildError(f"{len(errors)} fetch(es) failed", manifest)
    return manifest


def load_file(manifest: DatasetManifest, entry: TradeFileEntry) -> Trades:
    return read_trades(manifest.root / entry.path)


def extract_core_days(manifest: DatasetManifest, event: PumpEvent) -> Trades:
    """Trades from 00:00 UTC the day before the signal to 24:00 the day after."""
    entry = manifest.file_for(event)
    d = event.signal_day
    lo, hi = (d - 1) * MS_PER_DAY, (d + 2) * MS_PER_DAY
    if not entry.covers(lo, hi):
        raise PartialCoverageError(f"{entry.path} does not cover {_day_str(d - 1)}..{_day_str(d + 2)}")
    return load_file(manifest, entry).between(lo, hi)
