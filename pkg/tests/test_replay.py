import numpy as np
import pytest

from pumpdetect.artifact import ConfigMismatchError, save_artifact
from pumpdetect.core import PipelineConfig, TradeRecord, UnsortedInputError
from pumpdetect.featurize import featurize
from pumpdetect.models import ThresholdModel
from pumpdetect.replay import (
    OutOfRangeError,
    ReplayEngine,
    cooldown_filter,
    detect_batch,
    inject_pump,
    replay_detect,
)
from pumpdetect.synthetic import quiet_series
from pumpdetect.tradeio import MalformedLineError, TRADE_HEADER, write_trades

DEFAULT = PipelineConfig()
REFERENCE_THRESHOLD = ThresholdModel(30.32)


@pytest.fixture(scope="module")
def long_quiet():
    # larger prints than the default so a scale-50 burst clears the absolute 30.32 threshold
    return quiet_series(21, duration_s=10 * 3600, qty_median=20_000)


def inside_chunk(t0, chunk_ms, offset_chunks):
    """A time whose 5 s burst fits inside one chunk.

    The window keeps the burst for hours, so fixtures end within one cooldown
    of the last injection; otherwise the pump re-alerts after every pause.
    """
    return (t0 // chunk_ms + offset_chunks) * chunk_ms + 1000


def test_cooldown_filter():
    starts = np.arange(10) * 600_000
    pos = np.array([1, 1, 1, 1, 0, 0, 1, 0, 0, 0], bool)
    assert cooldown_filter(starts, pos, 1_800_000) == [0, 3, 6]


def test_quiet_series_is_silent_at_reference_threshold(long_quiet, tmp_path):
    feats = featurize(long_quiet, DEFAULT)
    assert feats.X[:, 0].max() < 30.32  # batch oracle
    write_trades(tmp_path / "q.csv", long_quiet)
    save_artifact(tmp_path / "m.json", REFERENCE_THRESHOLD, DEFAULT)
    assert list(replay_detect(tmp_path / "q.csv", tmp_path / "m.json")) == []


def test_injected_pump_alerts_once_in_its_chunk(long_quiet, tmp_path):
    at = inside_chunk(int(long_quiet.ts_ms[0]), DEFAULT.chunk_ms, 1400)
    pumped = inject_pump(long_quiet, at)
    feats = featurize(pumped, DEFAULT)
    i = int(np.searchsorted(feats.chunk_start_ms, at, side="right")) - 1
    assert feats.X[i, 0] > 30.32
    write_trades(tmp_path / "p.csv", pumped)
    save_artifact(tmp_path / "m.json", REFERENCE_THRESHOLD, DEFAULT)
    alerts = list(replay_detect(tmp_path / "p.csv", tmp_path / "m.json", symbol="XYZBTC"))
    assert len(alerts) == 1
    a = alerts[0]
    assert a.chunk_start_ms <= at < a.chunk_start_ms + DEFAULT.chunk_ms
    assert (a.symbol, a.model_id) == ("XYZBTC", "threshold")
    assert alerts == detect_batch(pumped, REFERENCE_THRESHOLD, DEFAULT, "XYZBTC")


def test_two_pumps_ten_minutes_apart_alert_once(long_quiet):
    at = inside_chunk(int(long_quiet.ts_ms[0]), DEFAULT.chunk_ms, 1385)
    pumped = inject_pump(inject_pump(long_quiet, at), at + 600_000, seed=1)
    alerts = detect_batch(pumped, REFERENCE_THRESHOLD, DEFAULT)
    assert len(alerts) == 1 and alerts[0].chunk_start_ms <= at
    engine = ReplayEngine(REFERENCE_THRESHOLD, DEFAULT)
    assert list(engine.run(pumped)) == alerts


def test_injection_in_warmup_is_silent(long_quiet):
    at = inside_chunk(int(long_quiet.ts_ms[0]), DEFAULT.chunk_ms, 10)
    pumped = inject_pump(long_quiet, at)
    chunk = at // DEFAULT.chunk_ms * DEFAULT.chunk_ms
    assert chunk not in featurize(pumped, DEFAULT).chunk_start_ms
    assert all(a.chunk_start_ms != chunk for a in detect_batch(pumped, REFERENCE_THRESHOLD, DEFAULT))


def test_buffer_is_bounded(long_quiet):
    cfg = PipelineConfig(chunk_seconds=5, window_seconds=300)
    engine = ReplayEngine(REFERENCE_THRESHOLD, cfg)
    peak = 0
    for tr in long_quiet:
        engine.push(tr)
        peak = max(peak, engine.buffered_chunks)
    engine.finish()
    assert engine.n_chunks > 7000
    assert peak == cfg.window_chunks


def test_exclusive_window_buffer_and_equivalence(long_quiet):
    cfg = PipelineConfig(chunk_seconds=15, window_seconds=600, window_includes_current=False)
    at = inside_chunk(int(long_quiet.ts_ms[0]), cfg.chunk_ms, 500)
    pumped = inject_pump(long_quiet, at, chunk_seconds=15)
    model = ThresholdModel(float(np.quantile(featurize(pumped, cfg).X[:, 0], 0.995)))
    engine = ReplayEngine(model, cfg)
    assert list(engine.run(pumped)) == detect_batch(pumped, model, cfg)
    assert engine.buffered_chunks == cfg.window_chunks + 1


def test_unsorted_stream_rejected():
    engine = ReplayEngine(REFERENCE_THRESHOLD, DEFAULT)
    engine.push(TradeRecord(2, 1000, 1.0, 1.0, True))
    with pytest.raises(UnsortedInputError):
        engine.push(TradeRecord(1, 1000, 1.0, 1.0, True))


def test_config_mismatch(long_quiet, tmp_path):
    write_trades(tmp_path / "q.csv", long_quiet)
    save_artifact(tmp_path / "m.json", REFERENCE_THRESHOLD, DEFAULT)
    with pytest.raises(ConfigMismatchError):
        list(replay_detect(tmp_path / "q.csv", tmp_path / "m.json", PipelineConfig(chunk_seconds=5)))
    # a different cooldown is allowed
    list(replay_detect(tmp_path / "q.csv", tmp_path / "m.json", PipelineConfig(cooldown_seconds=60)))


def test_malformed_line_reports_line_number(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text(",".join(TRADE_HEADER) + "\n1,1000,0.1,5,true\n2,1001,abc,5,true\n")
    save_artifact(tmp_path / "m.json", REFERENCE_THRESHOLD, DEFAULT)
    with pytest.raises(MalformedLineError) as ei:
        list(replay_detect(p, tmp_path / "m.json"))
    assert ei.value.lineno == 3


def test_inject_identity_and_range(long_quiet):
    assert inject_pump(long_quiet, int(long_quiet.ts_ms[100]), rush_volume_scale=0) == long_quiet
    with pytest.raises(OutOfRangeError):
        inject_pump(long_quiet, int(long_quiet.ts_ms[-1]) + 1)


def test_inject_shape(long_quiet):
    at = int(long_quiet.ts_ms[500])
    out = inject_pump(long_quiet, at, n_rush=10, fills_per_rush=3)
    assert len(out) == len(long_quiet) + 30
    assert out.is_sorted()
    assert np.all(np.diff(out.trade_id) == 1) and out.trade_id[0] == long_quiet.trade_id[0]
    base_ids = set(zip(long_quiet.ts_ms.tolist(), long_quiet.price.tolist()))
    new = [(t, p) for t, p, b in zip(out.ts_ms.tolist(), out.price.tolist(), out.is_buy_taker.tolist())
           if (t, p) not in base_ids]
    assert len(new) == 30
    ts = sorted({t for t, _ in new})
    assert len(ts) == 10 and at <= ts[0] and ts[-1] < at + 5000
    # rising levels
    levels = [min(p for t, p in new if t == s) for s in ts]
    assert levels == sorted(levels)
