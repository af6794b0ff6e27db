"""Seeded synthetic trade tapes for tests and demos."""

from __future__ import annotations

import numpy as np

from .core import Trades


def quiet_series(seed: int, start_ms: int = 1_600_000_000_000, duration_s: float = 36_000,
                 rate_per_s: float = 0.2, price0: float = 5e-5, qty_median: float = 4000.0,
                 volatility: float = 2e-4, multi_fill_prob: float = 0.15) -> Trades:
    """Poisson-arrival trades around a slowly wandering price.

    Prices are quoted in BTC-like units (median trade about 0.2 quote units).
    With probability ``multi_fill_prob`` a print is split into 2-4 fills at the
    same millisecond, like a small market order sweeping a few asks.
    """
    rng = np.random.default_rng(seed)
    n_orders = rng.poisson(rate_per_s * duration_s)
    offsets = np.sort(rng.uniform(0, duration_s * 1000, size=n_orders)).astype(np.int64)
    steps = rng.normal(0.0, volatility, size=n_orders)
    mid = price0 * np.exp(np.cumsum(steps))
    fills = np.where(rng.random(n_orders) < multi_fill_prob, rng.integers(2, 5, size=n_orders), 1)
    buy = rng.random(n_orders) < 0.5

    order_of = np.repeat(np.arange(n_orders), fills)
    level = np.concatenate([np.arange(f) for f in fills]) if n_orders else np.empty(0, dtype=np.int64)
    sign = np.where(buy[order_of], 1.0, -1.0)
    price = mid[order_of] * (1.0 + sign * 1e-3 * level)
    qty = rng.lognormal(np.log(qty_median), 0.8, size=len(order_of)) / fills[order_of]
    ts = start_ms + offsets[order_of]
    price = np.round(price, 10)
    qty = np.round(qty, 4)
    qty = np.maximum(qty, 1e-4)
    ids = 1_000 + np.arange(len(ts), dtype=np.int64)
    return Trades(ids, ts, price, qty, buy[order_of])
