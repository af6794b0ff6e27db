"""
Building an event dataset against a local mock exchange
=======================================================

The client pages through the aggregated-trades endpoint, the dataset builder
merges overlapping +/-7 day windows per symbol, and the core three days of
each event are cut back out.
"""

import tempfile
from pathlib import Path

from pumpdetect.core import MS_PER_DAY, PumpEvent
from pumpdetect.ingest import ClientConfig, TradeClient, build_event_dataset, extract_core_days
from pumpdetect.mockserver import MockExchange
from pumpdetect.synthetic import quiet_series

day = 19_000
series = {sym: quiet_series(i, start_ms=(day - 10) * MS_PER_DAY, duration_s=25 * 86400, rate_per_s=0.005)
          for i, sym in enumerate(["AAABTC", "BBBBTC"])}
events = [PumpEvent("AAABTC", "binance", day * MS_PER_DAY + 18 * 3_600_000),
          PumpEvent("AAABTC", "binance", (day + 3) * MS_PER_DAY + 20 * 3_600_000),
          PumpEvent("BBBBTC", "binance", (day + 1) * MS_PER_DAY + 17 * 3_600_000)]

mock = MockExchange(series, max_limit=1000)
with mock as url, tempfile.TemporaryDirectory() as tmp:
    client = TradeClient(ClientConfig(base_url=url, requests_per_minute=60_000))
    manifest = build_event_dataset(events, client.fetch_trades, tmp)
    print(f"{len(mock.requests)} requests")
    for f in manifest.files:
        print(f"  {f.path}: {f.end_day - f.start_day} days, {f.n_trades} trades")
    for ev in events:
        core = extract_core_days(manifest, ev)
        print(f"  {ev.symbol} signal day {ev.signal_day}: {len(core)} trades in the core three days")
    print((Path(tmp) / "manifest.json").read_text()[:300])
