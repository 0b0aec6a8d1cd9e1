import datetime as dt

import numpy as np
import pytest

from intraliq.binning import BIN_FIELDS, BinPanel, MarketConfig, empty_panel_data, garman_klass

# An 8-bin UTC market with a lunch break keeps panels tiny.
TINY = MarketConfig(dt.time(9, 0), dt.time(10, 0), (dt.time(9, 20), dt.time(9, 40)),
                    bin_length=dt.timedelta(minutes=5), zone="tiny", tz="UTC")


def random_panel(rng, n_days=6, market=TINY, p_empty=0.2, p_zero=0.1, tick_size=0.01):
    """Bins panel with random empty bins and exact-zero volatilities."""
    S = market.bins_per_day
    data = empty_panel_data(n_days, S)
    n = rng.integers(1, 50, size=(n_days, S))
    n[rng.random((n_days, S)) < p_empty] = 0
    live = n > 0
    o = 100 * np.exp(rng.normal(0, 0.01, (n_days, S)))
    c = o * np.exp(rng.normal(0, 0.005, (n_days, S)))
    h = np.maximum(o, c) * np.exp(np.abs(rng.normal(0, 0.003, (n_days, S))))
    lo = np.minimum(o, c) * np.exp(-np.abs(rng.normal(0, 0.003, (n_days, S))))
    zero = rng.random((n_days, S)) < p_zero
    h = np.where(zero, o, h)
    lo = np.where(zero, o, lo)
    c = np.where(zero, o, c)
    spread = rng.uniform(0.01, 0.05, (n_days, S))
    fields = {
        "open": o, "high": h, "low": lo, "close": c,
        "traded_value": rng.uniform(1e3, 1e5, (n_days, S)),
        "spread": spread, "spread_ticks": spread / tick_size,
        "book_size": rng.uniform(100, 1000, (n_days, S)),
        "volatility": garman_klass(o, h, lo, c),
    }
    for f, v in fields.items():
        data[f] = np.where(live, v, 0.0 if f == "traded_value" else np.nan)
    data["n_trades"] = n
    days = np.datetime64("2020-01-06") + np.arange(n_days)
    return BinPanel(market, tick_size, days, data)


def positive_panel(rng, n_days=20, market=TINY, tick_size=0.01):
    """Fully populated panel with strictly positive values for every variable."""
    return random_panel(rng, n_days, market, p_empty=0.0, p_zero=0.0, tick_size=tick_size)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


assert set(BIN_FIELDS) >= {"volatility", "spread", "book_size", "traded_value"}
