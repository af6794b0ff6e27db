import numpy as np
import pytest

from pumpdetect.core import PipelineConfig, Trades
from pumpdetect.synthetic import quiet_series


def make_trades(rows):
    """rows: (trade_id, ts_ms, price, qty, is_buy_taker)"""
    if not rows:
        return Trades.empty()
    return Trades(*zip(*rows))


@pytest.fixture
def small_config():
    return PipelineConfig(chunk_seconds=5, window_seconds=300, cooldown_seconds=1800)


@pytest.fixture(scope="session")
def quiet():
    return quiet_series(7, duration_s=4 * 3600)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
