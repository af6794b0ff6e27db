"""
Rush orders and moving-window features on a synthetic tape
===========================================================

A quiet trade tape gets one injected buy burst. We follow it through the
pipeline: rush orders, 25 s chunks, then the nine moving-window features.
"""

import numpy as np

from pumpdetect import FEATURE_NAMES, PipelineConfig, chunk_series, featurize, infer_rush_orders
from pumpdetect.featurize import rush_orders
from pumpdetect.replay import inject_pump
from pumpdetect.synthetic import quiet_series

config = PipelineConfig()  # 25 s chunks, 7 h window
base = quiet_series(seed=1, duration_s=9 * 3600)
print(f"{len(base)} trades over {(base.ts_ms[-1] - base.ts_ms[0]) / 3.6e6:.1f} h")

# Buy-taker fills sharing a millisecond are one rush order.
ro = rush_orders(base)
print(f"{len(ro)} rush orders, {np.sum(ro.n_fills > 1)} of them multi-fill")
print("first three:", infer_rush_orders(base.take(np.arange(40)))[:3])

# Put a pump 8 h in, inside a single chunk
at = (int(base.ts_ms[0]) // config.chunk_ms + 8 * 144) * config.chunk_ms + 2_000
pumped = inject_pump(base, at)
print(f"injected {len(pumped) - len(base)} fills at {at}")

chunks = chunk_series(pumped, None, config)
i = int(np.searchsorted(chunks.start_ms, at, side="right")) - 1
print("pump chunk:", chunks[i])
print("median chunk quote volume:", np.median(chunks.quote_volume))

feats = featurize(pumped, config)
j = int(np.searchsorted(feats.chunk_start_ms, at, side="right")) - 1
for name, before, during in zip(FEATURE_NAMES, feats.X[j - 1], feats.X[j]):
    print(f"  {name:16s} {before:12.5g} -> {during:12.5g}")

# std_rush_orders jumps by an order of magnitude; the price features barely move
quiet_max = feats.X[:j, 0].max()
print(f"max std_rush_orders before the pump: {quiet_max:.3f}, at the pump: {feats.X[j, 0]:.3f}")
