"""
Hourly adaptive-threshold baseline
==================================

Candles from the trade tape, compared against the mean of the previous 12
hours. The three presets flag nested sets of hours.
"""

import numpy as np

from pumpdetect.models.kamps import PRESETS, build_candles, kamps_detect
from pumpdetect.replay import inject_pump
from pumpdetect.synthetic import quiet_series

tape = quiet_series(seed=4, duration_s=30 * 3600, volatility=1e-3)
at = int(tape.ts_ms[-1])  # the burst closes the last hour
tape = inject_pump(tape, at)

candles = build_candles(tape)
print(f"{len(candles)} hourly candles")
flags = {name: kamps_detect(candles, cfg) for name, cfg in PRESETS.items()}
for name, f in flags.items():
    print(f"{name:9s} flags hours {np.flatnonzero(f).tolist()}")

last = candles[len(candles) - 1]
print("last candle:", last)
print("nested:", bool(np.all(flags["strict"] <= flags["balanced"]) and np.all(flags["balanced"] <= flags["initial"])))
