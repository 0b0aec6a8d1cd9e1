import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from intraliq.ingest import (
    QUOTE_HEADER, TRADE_HEADER, Quotes, TickValidationError, Trades, attach_prevailing_quote,
    parse_enriched_file, parse_tick_file, write_enriched, write_quotes, write_trades,
)


def make_trades(ts, price=None, qty=None):
    ts = np.asarray(ts, dtype=np.int64)
    n = len(ts)
    return Trades(ts, np.full(n, 10.0) if price is None else np.asarray(price, float),
                  np.full(n, 1.0) if qty is None else np.asarray(qty, float))


def make_quotes(ts, bid=None, ask=None):
    ts = np.asarray(ts, dtype=np.int64)
    n = len(ts)
    bid = np.full(n, 9.99) if bid is None else np.asarray(bid, float)
    ask = np.full(n, 10.01) if ask is None else np.asarray(ask, float)
    return Quotes(ts, bid, ask, np.full(n, 300.0), np.full(n, 500.0))


def brute_force_pairing(trade_ts, quote_ts):
    out = []
    for t in trade_ts:
        best = None
        for j, q in enumerate(quote_ts):
            if q < t:
                best = j
        out.append(best)
    return out


def test_header_only_file_is_empty():
    trades, quotes = parse_tick_file(io.StringIO(",".join(TRADE_HEADER) + "\n"))
    assert len(trades) == 0 and len(quotes) == 0


def test_counts_preserved():
    t = ",".join(TRADE_HEADER) + "\n1,10.0,5\n2,10.5,3\n"
    q = ",".join(QUOTE_HEADER) + "\n1,9.9,10.1,100,200\n2,9.9,10.1,100,200\n3,9.8,10.2,50,60\n"
    trades, _ = parse_tick_file(io.StringIO(t))
    _, quotes = parse_tick_file(io.StringIO(q))
    assert (len(trades), len(quotes)) == (2, 3)


def test_crossed_quote_reports_line():
    q = ",".join(QUOTE_HEADER) + "\n1,9.9,10.1,100,200\n2,10.2,10.1,100,200\n"
    with pytest.raises(TickValidationError) as err:
        parse_tick_file(io.StringIO(q))
    assert err.value.line == 3


@pytest.mark.parametrize("row", ["1,-10.0,5", "1,10.0,0", "1,abc,5", "1,10.0"])
def test_malformed_trade_rows_rejected(row):
    with pytest.raises(TickValidationError):
        parse_tick_file(io.StringIO(",".join(TRADE_HEADER) + "\n" + row + "\n"))


def test_decreasing_timestamps_rejected():
    t = ",".join(TRADE_HEADER) + "\n5,10.0,1\n4,10.0,1\n"
    with pytest.raises(TickValidationError) as err:
        parse_tick_file(io.StringIO(t))
    assert err.value.line == 3


def test_unknown_header_rejected():
    with pytest.raises(TickValidationError):
        parse_tick_file(io.StringIO("a,b,c\n1,2,3\n"))


def test_strict_precedence():
    e = attach_prevailing_quote(make_trades([2]), make_quotes([1, 3], bid=[9.0, 9.5]))
    assert e.quotes.timestamp[0] == 1 and e.quotes.bid[0] == 9.0


def test_quote_at_same_timestamp_is_not_prevailing():
    e = attach_prevailing_quote(make_trades([3]), make_quotes([1, 3], bid=[9.0, 9.5]))
    assert e.quotes.timestamp[0] == 1


def test_trade_before_first_quote_dropped():
    e = attach_prevailing_quote(make_trades([0, 5]), make_quotes([1]))
    assert len(e) == 1 and e.n_dropped == 1


def test_random_interleaving_matches_brute_force():
    rng = np.random.default_rng(3)
    ts = np.sort(rng.choice(10**6, size=10**4, replace=False))
    is_trade = rng.random(len(ts)) < 0.5
    trade_ts, quote_ts = ts[is_trade], ts[~is_trade]
    quotes = make_quotes(quote_ts, bid=np.arange(len(quote_ts)) + 1.0,
                         ask=np.arange(len(quote_ts)) + 2.0)
    e = attach_prevailing_quote(make_trades(trade_ts), quotes)
    # brute force on a subsample keeps the scan cheap; searchsorted-free oracle
    expect = brute_force_pairing(trade_ts[:300], quote_ts)
    got = {int(t): int(b) - 1 for t, b in zip(e.trades.timestamp, e.quotes.bid)}
    for t, j in zip(trade_ts[:300], expect):
        if j is None:
            assert int(t) not in got
        else:
            assert got[int(t)] == j
    assert len(e) + e.n_dropped == len(trade_ts)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 200), min_size=1, max_size=40),
       st.lists(st.integers(0, 200), min_size=1, max_size=40))
def test_pairing_properties(trade_ts, quote_ts):
    trade_ts, quote_ts = sorted(trade_ts), sorted(quote_ts)
    quotes = make_quotes(quote_ts, bid=np.arange(len(quote_ts)) + 1.0,
                         ask=np.arange(len(quote_ts)) + 2.0)
    e = attach_prevailing_quote(make_trades(trade_ts), quotes)
    assert len(e) + e.n_dropped == len(trade_ts)
    assert np.all(e.quotes.timestamp < e.trades.timestamp)
    expect = [j for j in brute_force_pairing(trade_ts, quote_ts) if j is not None]
    assert [int(b) - 1 for b in e.quotes.bid] == expect
    # quotes after the last trade change nothing
    late = max(trade_ts + quote_ts) + 1
    more = make_quotes(quote_ts + [late], bid=np.arange(len(quote_ts) + 1) + 1.0,
                       ask=np.arange(len(quote_ts) + 1) + 2.0)
    e2 = attach_prevailing_quote(make_trades(trade_ts), more)
    assert np.array_equal(e2.quotes.bid, e.quotes.bid)


finite = st.floats(1e-3, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10**12), finite, finite), max_size=20))
def test_trade_round_trip_bit_exact(rows):
    rows = sorted(rows, key=lambda r: r[0])
    trades = Trades(np.array([r[0] for r in rows], dtype=np.int64),
                    np.array([r[1] for r in rows]), np.array([r[2] for r in rows]))
    buf = io.StringIO()
    write_trades(buf, trades)
    back, _ = parse_tick_file(io.StringIO(buf.getvalue()), "trades")
    assert back.timestamp.tobytes() == trades.timestamp.tobytes()
    assert back.price.tobytes() == trades.price.tobytes()
    assert back.quantity.tobytes() == trades.quantity.tobytes()


def test_quote_and_enriched_round_trip():
    rng = np.random.default_rng(1)
    q = make_quotes(np.arange(1, 21) * 7, bid=rng.uniform(9, 10, 20), ask=rng.uniform(10, 11, 20))
    buf = io.StringIO()
    write_quotes(buf, q)
    _, back = parse_tick_file(io.StringIO(buf.getvalue()))
    assert back.bid.tobytes() == q.bid.tobytes() and back.ask.tobytes() == q.ask.tobytes()
    e = attach_prevailing_quote(make_trades(np.arange(1, 30) * 5, price=rng.uniform(9, 11, 29)), q)
    buf = io.StringIO()
    write_enriched(buf, e)
    e2 = parse_enriched_file(io.StringIO(buf.getvalue()))
    assert e2.trades.price.tobytes() == e.trades.price.tobytes()
    assert e2.quotes.ask.tobytes() == e.quotes.ask.tobytes()
