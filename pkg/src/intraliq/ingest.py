"""Tick-level trade/quote parsing and prevailing-quote attachment.

Events are held column-wise in numpy arrays (``Trades``, ``Quotes``,
``EnrichedTrades``); the per-event dataclasses exist for iteration and for
building small fixtures by hand.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

TRADE_HEADER = ("timestamp_ns", "price", "quantity")
QUOTE_HEADER = ("timestamp_ns", "bid", "ask", "bid_size", "ask_size")
ENRICHED_HEADER = TRADE_HEADER + QUOTE_HEADER[1:]


class TickValidationError(ValueError):
    """Malformed or inconsistent tick record."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class TradeEvent:
    timestamp: int
    price: float
    quantity: float


@dataclass(frozen=True)
class QuoteEvent:
    timestamp: int
    bid: float
    ask: float
    bid_size: float
    ask_size: float


@dataclass(frozen=True)
class EnrichedTrade:
    trade: TradeEvent
    prev_quote: QuoteEvent


@dataclass
class Trades:
    timestamp: np.ndarray
    price: np.ndarray
    quantity: np.ndarray

    def __post_init__(self):
        self.timestamp = np.asarray(self.timestamp, dtype=np.int64)
        self.price = np.asarray(self.price, dtype=float)
        self.quantity = np.asarray(self.quantity, dtype=float)

    def __len__(self) -> int:
        return len(self.timestamp)

    def __iter__(self) -> Iterator[TradeEvent]:
        for t, p, q in zip(self.timestamp.tolist(), self.price.tolist(), self.quantity.tolist()):
            yield TradeEvent(t, p, q)

    def __getitem__(self, idx) -> "Trades":
        return Trades(self.timestamp[idx], self.price[idx], self.quantity[idx])

    @classmethod
    def from_events(cls, events: Iterable[TradeEvent]) -> "Trades":
        events = list(events)
        return cls(
            [e.timestamp for e in events],
            [e.price for e in events],
            [e.quantity for e in events],
        )

    @classmethod
    def empty(cls) -> "Trades":
        return cls([], [], [])


@dataclass
class Quotes:
    timestamp: np.ndarray
    bid: np.ndarray
    ask: np.ndarray
    bid_size: np.ndarray
    ask_size: np.ndarray

    def __post_init__(self):
        self.timestamp = np.asarray(self.timestamp, dtype=np.int64)
        for name in ("bid", "ask", "bid_size", "ask_size"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    def __len__(self) -> int:
        return len(self.timestamp)

    def __iter__(self) -> Iterator[QuoteEvent]:
        cols = (self.timestamp, self.bid, self.ask, self.bid_size, self.ask_size)
        for row in zip(*(c.tolist() for c in cols)):
            yield QuoteEvent(*row)

    def __getitem__(self, idx) -> "Quotes":
        return Quotes(self.timestamp[idx], self.bid[idx], self.ask[idx],
                      self.bid_size[idx], self.ask_size[idx])

    @classmethod
    def from_events(cls, events: Iterable[QuoteEvent]) -> "Quotes":
        events = list(events)
        return cls(
            [e.timestamp for e in events],
            [e.bid for e in events],
            [e.ask for e in events],
            [e.bid_size for e in events],
            [e.ask_size for e in events],
        )

    @classmethod
    def empty(cls) -> "Quotes":
        return cls([], [], [], [], [])


@dataclass
class EnrichedTrades:
    """Trades with the quote prevailing strictly before each of them.

    ``quotes`` is aligned row-for-row with ``trades``. ``n_dropped`` counts
    input trades discarded because no earlier quote existed.
    """

    trades: Trades
    quotes: Quotes
    n_dropped: int = 0

    def __len__(self) -> int:
        return len(self.trades)

    def __iter__(self) -> Iterator[EnrichedTrade]:
        for t, q in zip(self.trades, self.quotes):
            yield EnrichedTrade(t, q)

    def __getitem__(self, idx) -> "EnrichedTrades":
        return EnrichedTrades(self.trades[idx], self.quotes[idx], 0)

    @classmethod
    def concat(cls, parts: Sequence["EnrichedTrades"]) -> "EnrichedTrades":
        if not parts:
            return cls(Trades.empty(), Quotes.empty(), 0)
        t = Trades(*(np.concatenate([getattr(p.trades, f) for p in parts])
                     for f in ("timestamp", "price", "quantity")))
        q = Quotes(*(np.concatenate([getattr(p.quotes, f) for p in parts])
                     for f in ("timestamp", "bid", "ask", "bid_size", "ask_size")))
        return cls(t, q, sum(p.n_dropped for p in parts))


Source = Union[str, bytes, IO[str], IO[bytes]]


def _text_stream(source: Source) -> IO[str]:
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, io.TextIOBase):
        return source
    if hasattr(source, "read"):
        return io.TextIOWrapper(source, encoding="utf-8", newline="")
    raise TypeError(f"unsupported source type {type(source)!r}")


def _read_rows(source: Source, header: Tuple[str, ...]):
    stream = _text_stream(source)
    try:
        reader = csv.reader(stream)
        try:
            found = next(reader)
        except StopIteration:
            raise TickValidationError("missing header", line=1) from None
        found = tuple(h.strip() for h in found)
        if found != header:
            raise TickValidationError(f"expected header {','.join(header)}, got {','.join(found)}", line=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise TickValidationError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            try:
                ts = int(row[0])
                vals = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise TickValidationError(f"unparseable field ({exc})", line=lineno) from None
            rows.append((lineno, ts, vals))
        return rows
    finally:
        if isinstance(source, str):
            stream.close()


def _check_monotone(rows):
    prev = None
    for lineno, ts, _ in rows:
        if prev is not None and ts < prev:
            raise TickValidationError(f"timestamp {ts} precedes previous timestamp {prev}", line=lineno)
        prev = ts


def _check_quote(lineno, bid, ask, bid_size, ask_size):
    if not bid > 0:
        raise TickValidationError(f"bid must be positive, got {bid}", line=lineno)
    if ask < bid:
        raise TickValidationError(f"ask {ask} below bid {bid}", line=lineno)
    if bid_size < 0 or ask_size < 0:
        raise TickValidationError("negative quote size", line=lineno)


def _check_trade(lineno, price, quantity):
    if not price > 0:
        raise TickValidationError(f"price must be positive, got {price}", line=lineno)
    if not quantity > 0:
        raise TickValidationError(f"quantity must be positive, got {quantity}", line=lineno)


def parse_tick_file(source: Source, fmt: str = "auto") -> Tuple[Trades, Quotes]:
    """Parse a trades or quotes CSV.

    ``fmt`` is ``"trades"``, ``"quotes"`` or ``"auto"`` (decided from the
    header). The file kind that was not read comes back empty. Raises
    ``TickValidationError`` carrying the offending line number.
    """
    if fmt == "auto":
        stream = _text_stream(source)
        text = stream.read()
        if isinstance(source, str):
            stream.close()
        first = text.split("\n", 1)[0].strip().rstrip("\r")
        fmt = "quotes" if tuple(first.split(",")) == QUOTE_HEADER else "trades"
        source = io.StringIO(text)

    if fmt == "trades":
        rows = _read_rows(source, TRADE_HEADER)
        _check_monotone(rows)
        for lineno, _, (p, q) in rows:
            _check_trade(lineno, p, q)
        arr = np.array([v for _, _, v in rows], dtype=float).reshape(-1, 2)
        ts = np.array([t for _, t, _ in rows], dtype=np.int64)
        return Trades(ts, arr[:, 0], arr[:, 1]), Quotes.empty()
    if fmt == "quotes":
        rows = _read_rows(source, QUOTE_HEADER)
        _check_monotone(rows)
        for lineno, _, v in rows:
            _check_quote(lineno, *v)
        arr = np.array([v for _, _, v in rows], dtype=float).reshape(-1, 4)
        ts = np.array([t for _, t, _ in rows], dtype=np.int64)
        return Trades.empty(), Quotes(ts, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
    raise ValueError(f"unknown tick file format {fmt!r}")


def parse_enriched_file(source: Source) -> EnrichedTrades:
    """Parse the combined ``timestamp_ns,price,quantity,bid,ask,bid_size,ask_size`` format.

    The quote columns are the pre-trade state; the attached quote is stamped
    one nanosecond before its trade.
    """
    rows = _read_rows(source, ENRICHED_HEADER)
    _check_monotone(rows)
    for lineno, _, v in rows:
        _check_trade(lineno, v[0], v[1])
        _check_quote(lineno, *v[2:])
    arr = np.array([v for _, _, v in rows], dtype=float).reshape(-1, 6)
    ts = np.array([t for _, t, _ in rows], dtype=np.int64)
    trades = Trades(ts, arr[:, 0], arr[:, 1])
    quotes = Quotes(ts - 1, arr[:, 2], arr[:, 3], arr[:, 4], arr[:, 5])
    return EnrichedTrades(trades, quotes, 0)


def attach_prevailing_quote(trades: Trades, quotes: Quotes) -> EnrichedTrades:
    """Pair each trade with the latest quote whose timestamp is strictly earlier.

    Trades preceding every quote are dropped and counted in ``n_dropped``.
    """
    idx = np.searchsorted(quotes.timestamp, trades.timestamp, side="left") - 1
    keep = idx >= 0
    n_dropped = int(np.count_nonzero(~keep))
    if n_dropped:
        logger.info("dropped %d trades with no prior quote", n_dropped)
    return EnrichedTrades(trades[keep], quotes[idx[keep]], n_dropped)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trades(stream: IO[str], trades: Trades) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(TRADE_HEADER)
    for t, p, q in zip(trades.timestamp.tolist(), trades.price.tolist(), trades.quantity.tolist()):
        w.writerow((t, _fmt(p), _fmt(q)))


def write_quotes(stream: IO[str], quotes: Quotes) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(QUOTE_HEADER)
    for e in quotes:
        w.writerow((e.timestamp, _fmt(e.bid), _fmt(e.ask), _fmt(e.bid_size), _fmt(e.ask_size)))


def write_enriched(stream: IO[str], enriched: EnrichedTrades) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(ENRICHED_HEADER)
    for e in enriched:
        t, q = e.trade, e.prev_quote
        w.writerow((t.timestamp, _fmt(t.price), _fmt(t.quantity),
                    _fmt(q.bid), _fmt(q.ask), _fmt(q.bid_size), _fmt(q.ask_size)))
