"""Market calendars, 5-minute bins and the four per-bin liquidity variables."""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, replace
from typing import IO, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .ingest import EnrichedTrades, Quotes

DAY_NS = 86_400 * 10**9

# Canonical variable order (volatility < spread < book < turnover) is used for
# subset ordering and tie-breaking everywhere.
VARIABLES: Tuple[str, ...] = ("volatility", "spread", "book", "turnover")
FIELD_OF: Dict[str, str] = {
    "volatility": "volatility",
    "spread": "spread",
    "book": "book_size",
    "turnover": "traded_value",
}
SYMBOL_OF: Dict[str, str] = {"volatility": "σ", "spread": "ψ", "book": "B", "turnover": "V"}

BIN_FIELDS: Tuple[str, ...] = (
    "open", "high", "low", "close", "traded_value", "spread", "spread_ticks",
    "book_size", "volatility", "n_trades",
)
BINS_HEADER: Tuple[str, ...] = ("date", "slot") + BIN_FIELDS

SPREAD_MODES = ("pre-trade", "bin-start")


class ConfigError(ValueError):
    pass


class DomainError(ValueError):
    pass


def _tod_ns(t: dt.time) -> int:
    return ((t.hour * 60 + t.minute) * 60 + t.second) * 10**9 + t.microsecond * 1000


@dataclass(frozen=True)
class MarketConfig:
    """Continuous-session calendar of one market, in local wall-clock time."""

    open_time: dt.time
    close_time: dt.time
    lunch_break: Optional[Tuple[dt.time, dt.time]] = None
    bin_length: dt.timedelta = dt.timedelta(minutes=5)
    zone: str = "custom"
    tz: str = "UTC"

    def __post_init__(self):
        o, c = _tod_ns(self.open_time), _tod_ns(self.close_time)
        step = self.bin_ns
        if step <= 0:
            raise ConfigError("bin_length must be positive")
        if not o < c:
            raise ConfigError("open_time must precede close_time")
        for a, b in self.sessions_ns:
            if (b - a) % step:
                raise ConfigError(
                    f"session {a}..{b} ns is not a whole number of {self.bin_length} bins")
        if self.lunch_break is not None:
            ls, le = map(_tod_ns, self.lunch_break)
            if not (o < ls < le < c):
                raise ConfigError("lunch break must lie strictly inside the session")

    @property
    def bin_ns(self) -> int:
        return int(self.bin_length / dt.timedelta(microseconds=1)) * 1000

    @property
    def sessions_ns(self) -> Tuple[Tuple[int, int], ...]:
        o, c = _tod_ns(self.open_time), _tod_ns(self.close_time)
        if self.lunch_break is None:
            return ((o, c),)
        ls, le = map(_tod_ns, self.lunch_break)
        return ((o, ls), (le, c))

    @property
    def session_bins(self) -> Tuple[int, ...]:
        return tuple((b - a) // self.bin_ns for a, b in self.sessions_ns)

    @property
    def bins_per_day(self) -> int:
        return sum(self.session_bins)

    @property
    def session_starts(self) -> Tuple[int, ...]:
        """First slot of each continuous session (0, plus the post-lunch slot)."""
        return tuple(int(x) for x in np.cumsum((0,) + self.session_bins[:-1]))

    def slot_start_tod_ns(self) -> np.ndarray:
        out = []
        for (a, _), n in zip(self.sessions_ns, self.session_bins):
            out.extend(a + k * self.bin_ns for k in range(n))
        return np.array(out, dtype=np.int64)

    def to_dict(self) -> dict:
        d = {
            "open": self.open_time.isoformat(),
            "close": self.close_time.isoformat(),
            "bin_minutes": self.bin_length.total_seconds() / 60,
            "zone": self.zone,
            "tz": self.tz,
        }
        if self.lunch_break:
            d["lunch"] = [t.isoformat() for t in self.lunch_break]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "MarketConfig":
        lunch = d.get("lunch")
        return cls(
            open_time=dt.time.fromisoformat(d["open"]),
            close_time=dt.time.fromisoformat(d["close"]),
            lunch_break=tuple(dt.time.fromisoformat(x) for x in lunch) if lunch else None,
            bin_length=dt.timedelta(minutes=float(d.get("bin_minutes", 5))),
            zone=d.get("zone", "custom"),
            tz=d.get("tz", "UTC"),
        )


MARKETS: Dict[str, MarketConfig] = {
    "US": MarketConfig(dt.time(9, 30), dt.time(16, 0), zone="US", tz="America/New_York"),
    "UK": MarketConfig(dt.time(8, 0), dt.time(16, 30), zone="UK", tz="Europe/London"),
    "Japan": MarketConfig(dt.time(9, 0), dt.time(15, 0), (dt.time(11, 30), dt.time(12, 30)),
                          zone="Japan", tz="Asia/Tokyo"),
    "HongKong": MarketConfig(dt.time(9, 30), dt.time(16, 0), (dt.time(12, 0), dt.time(13, 0)),
                             zone="HongKong", tz="Asia/Hong_Kong"),
}


def market_config(name: str) -> MarketConfig:
    try:
        return MARKETS[name]
    except KeyError:
        raise ConfigError(f"unknown market {name!r}; choose from {sorted(MARKETS)}") from None


def _local_ns(timestamps: np.ndarray, tz: str) -> np.ndarray:
    idx = pd.to_datetime(np.asarray(timestamps, dtype=np.int64), unit="ns", utc=True)
    return idx.tz_convert(tz).tz_localize(None).asi8


def assign_bins(timestamps: np.ndarray, market: MarketConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised bin assignment.

    Returns ``(day, slot)`` where ``day`` is days since the epoch in market
    local time and ``slot`` is -1 for timestamps outside the continuous
    sessions.
    """
    local = _local_ns(timestamps, market.tz)
    day = local // DAY_NS
    tod = local - day * DAY_NS
    slot = np.full(len(local), -1, dtype=np.int64)
    offset = 0
    for (a, b), n in zip(market.sessions_ns, market.session_bins):
        inside = (tod >= a) & (tod < b)
        slot[inside] = offset + (tod[inside] - a) // market.bin_ns
        offset += n
    return day, slot


def assign_bin(timestamp: int, market: MarketConfig) -> Optional[Tuple[dt.date, int]]:
    """Map one UTC nanosecond timestamp to ``(local date, slot)`` or None."""
    day, slot = assign_bins(np.array([timestamp]), market)
    if slot[0] < 0:
        return None
    return dt.date(1970, 1, 1) + dt.timedelta(days=int(day[0])), int(slot[0])


def bin_start_ns(days: np.ndarray, market: MarketConfig) -> np.ndarray:
    """UTC nanosecond opening instant of every (day, slot); shape (n_days, S)."""
    days = np.asarray(days).astype("datetime64[D]").astype(np.int64)
    local = days[:, None] * DAY_NS + market.slot_start_tod_ns()[None, :]
    idx = pd.DatetimeIndex(local.ravel()).tz_localize(
        market.tz, ambiguous="NaT", nonexistent="NaT")
    return idx.tz_convert("UTC").asi8.reshape(local.shape)


_GK_C = 2.0 * math.log(2.0) - 1.0


def garman_klass(o, h, l, c):
    """Garman-Klass OHLC variance of one bin (arrays broadcast elementwise)."""
    o, h, l, c = (np.asarray(x, dtype=float) for x in (o, h, l, c))
    bad = ~((l > 0) & (l <= o) & (l <= c) & (o <= h) & (c <= h))
    if np.any(bad):
        raise DomainError("garman_klass requires 0 < low <= open, close <= high")
    out = 0.5 * np.log(h / l) ** 2 - _GK_C * np.log(c / o) ** 2
    # rounding can push the degenerate case a hair below zero
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def traded_value(prices: Sequence[float], quantities: Sequence[float]) -> float:
    """Sum of price x quantity over a bin's trades."""
    return math.fsum(p * q for p, q in zip(prices, quantities))


def bin_spread_and_book(
    enriched: EnrichedTrades,
    mode: str = "pre-trade",
    quotes: Optional[Quotes] = None,
    bin_start: Optional[int] = None,
) -> Tuple[float, float]:
    """Spread and book size of a single bin.

    ``pre-trade`` averages over the bin's trades the quote attached to each
    trade. ``bin-start`` uses the quote prevailing at ``bin_start`` (last
    quote stamped at or before it) from ``quotes``. Missing values are NaN.
    """
    if mode == "pre-trade":
        if len(enriched) == 0:
            return math.nan, math.nan
        q = enriched.quotes
        return float(np.mean(q.ask - q.bid)), float(np.mean((q.bid_size + q.ask_size) / 2.0))
    if mode == "bin-start":
        if quotes is None or bin_start is None:
            raise ValueError("bin-start mode needs the quote log and the bin start")
        i = int(np.searchsorted(quotes.timestamp, bin_start, side="right")) - 1
        if i < 0:
            return math.nan, math.nan
        return (float(quotes.ask[i] - quotes.bid[i]),
                float((quotes.bid_size[i] + quotes.ask_size[i]) / 2.0))
    raise ValueError(f"unknown spread mode {mode!r}")


@dataclass(frozen=True)
class Bin:
    day: dt.date
    slot: int
    open: float
    high: float
    low: float
    close: float
    traded_value: float
    spread: float
    spread_ticks: float
    book_size: float
    volatility: float
    n_trades: int

    @property
    def empty(self) -> bool:
        return self.n_trades == 0


@dataclass
class BinPanel:
    """Per-stock (day x slot) grid of bins.

    ``data`` maps every name in ``BIN_FIELDS`` to an array of shape
    ``(n_days, bins_per_day)``. Empty bins have ``n_trades == 0``,
    ``traded_value == 0`` and NaN elsewhere.
    """

    market: MarketConfig
    tick_size: float
    days: np.ndarray
    data: Dict[str, np.ndarray]
    stock_id: str = ""
    spread_mode: str = "pre-trade"

    def __post_init__(self):
        self.days = np.asarray(self.days).astype("datetime64[D]")
        shape = (len(self.days), self.market.bins_per_day)
        for f in BIN_FIELDS:
            arr = np.asarray(self.data[f])
            if arr.shape != shape:
                raise ValueError(f"field {f} has shape {arr.shape}, expected {shape}")
            self.data[f] = arr.astype(np.int64 if f == "n_trades" else float)

    @property
    def n_days(self) -> int:
        return len(self.days)

    @property
    def n_slots(self) -> int:
        return self.market.bins_per_day

    @property
    def empty(self) -> np.ndarray:
        return self.data["n_trades"] == 0

    def variable(self, name: str) -> np.ndarray:
        """Values of a liquidity variable with empty bins set to NaN."""
        out = self.data[FIELD_OF.get(name, name)].copy()
        out[self.empty] = np.nan
        return out

    def bin(self, day, slot: int) -> Bin:
        d = np.datetime64(day, "D")
        hits = np.flatnonzero(self.days == d)
        if not len(hits):
            raise KeyError(f"day {d} not in panel")
        i = hits[0]
        vals = {f: float(self.data[f][i, slot]) for f in BIN_FIELDS if f != "n_trades"}
        return Bin(day=d.astype(dt.date), slot=slot, n_trades=int(self.data["n_trades"][i, slot]), **vals)

    def select_days(self, keep) -> "BinPanel":
        keep = np.asarray(keep)
        return replace(self, days=self.days[keep],
                       data={f: v[keep].copy() for f, v in self.data.items()})

    def copy(self) -> "BinPanel":
        return replace(self, days=self.days.copy(), data={f: v.copy() for f, v in self.data.items()})

    @classmethod
    def concat(cls, panels: Sequence["BinPanel"]) -> "BinPanel":
        first = panels[0]
        days = np.concatenate([p.days for p in panels])
        order = np.argsort(days, kind="stable")
        data = {f: np.concatenate([p.data[f] for p in panels])[order] for f in BIN_FIELDS}
        return replace(first, days=days[order], data=data)


def empty_panel_data(n_days: int, n_slots: int) -> Dict[str, np.ndarray]:
    data = {f: np.full((n_days, n_slots), np.nan) for f in BIN_FIELDS}
    data["traded_value"] = np.zeros((n_days, n_slots))
    data["n_trades"] = np.zeros((n_days, n_slots), dtype=np.int64)
    return data


def build_bins(
    enriched: EnrichedTrades,
    market: MarketConfig,
    tick_size: float,
    mode: str = "pre-trade",
    quotes: Optional[Quotes] = None,
    stock_id: str = "",
) -> BinPanel:
    """Aggregate enriched trades into a ``BinPanel``.

    Days are those with at least one trade in a continuous session. OHLC come
    from the bin's own trades (first, max, min, last traded price).
    ``quotes`` is the full quote log for ``mode="bin-start"``; when omitted
    the quotes attached to the trades are used as the log.
    """
    if not tick_size > 0:
        raise ConfigError(f"tick_size must be positive, got {tick_size}")
    if mode not in SPREAD_MODES:
        raise ConfigError(f"unknown spread mode {mode!r}")
    ts = enriched.trades.timestamp
    if len(ts) and np.any(np.diff(ts) < 0):
        raise ValueError("enriched trades must be sorted by timestamp")

    day, slot = assign_bins(ts, market)
    inside = slot >= 0
    S = market.bins_per_day
    days = np.unique(day[inside])
    data = empty_panel_data(len(days), S)
    panel_days = days.astype("datetime64[D]")

    if inside.any():
        tr = enriched.trades[inside]
        qt = enriched.quotes[inside]
        di = np.searchsorted(days, day[inside])
        key = di * S + slot[inside]
        # sorted timestamps imply non-decreasing keys
        starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        ends = np.r_[starts[1:], len(key)]
        ukey = key[starts]
        counts = ends - starts
        p = tr.price
        flat = {f: data[f].reshape(-1) for f in BIN_FIELDS}
        flat["open"][ukey] = p[starts]
        flat["close"][ukey] = p[ends - 1]
        flat["high"][ukey] = np.maximum.reduceat(p, starts)
        flat["low"][ukey] = np.minimum.reduceat(p, starts)
        flat["traded_value"][ukey] = np.add.reduceat(p * tr.quantity, starts)
        flat["n_trades"][ukey] = counts
        if mode == "pre-trade":
            flat["spread"][ukey] = np.add.reduceat(qt.ask - qt.bid, starts) / counts
            flat["book_size"][ukey] = np.add.reduceat((qt.bid_size + qt.ask_size) / 2.0, starts) / counts
        flat["volatility"][ukey] = garman_klass(flat["open"][ukey], flat["high"][ukey],
                                                flat["low"][ukey], flat["close"][ukey])

    if mode == "bin-start" and len(days):
        log = quotes if quotes is not None else enriched.quotes
        if quotes is None:
            order = np.argsort(log.timestamp, kind="stable")
            log = log[order]
        starts_ns = bin_start_ns(panel_days, market)
        i = np.searchsorted(log.timestamp, starts_ns.ravel(), side="right") - 1
        ok = (i >= 0) & (data["n_trades"].ravel() > 0)
        sp = np.full(i.shape, np.nan)
        bk = np.full(i.shape, np.nan)
        sp[ok] = log.ask[i[ok]] - log.bid[i[ok]]
        bk[ok] = (log.bid_size[i[ok]] + log.ask_size[i[ok]]) / 2.0
        data["spread"] = sp.reshape(data["spread"].shape)
        data["book_size"] = bk.reshape(data["book_size"].shape)

    data["spread_ticks"] = data["spread"] / tick_size
    return BinPanel(market, tick_size, panel_days, data, stock_id=stock_id, spread_mode=mode)


def _fmt(x: float) -> str:
    return "" if not np.isfinite(x) else repr(float(x))


def write_bins(stream: IO[str], panel: BinPanel) -> None:
    """Write the bins CSV; empty bins carry ``n_trades=0`` and blank variable fields."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(BINS_HEADER)
    empty = panel.empty
    cols = {f: panel.data[f].tolist() for f in BIN_FIELDS}
    for i, d in enumerate(panel.days.astype(str).tolist()):
        for s in range(panel.n_slots):
            row = [d, s]
            for f in BIN_FIELDS:
                v = cols[f][i][s]
                if f == "n_trades":
                    row.append(int(v))
                elif empty[i, s]:
                    row.append("")
                else:
                    row.append(_fmt(v))
            w.writerow(row)


def read_bins(stream: IO[str], market: MarketConfig, tick_size: float,
              stock_id: str = "", spread_mode: str = "pre-trade") -> BinPanel:
    reader = csv.reader(stream)
    header = tuple(next(reader))
    if header != BINS_HEADER:
        raise ValueError(f"bins CSV header must be {','.join(BINS_HEADER)}")
    rows = [r for r in reader if r]
    S = market.bins_per_day
    days = sorted({r[0] for r in rows})
    index = {d: i for i, d in enumerate(days)}
    data = empty_panel_data(len(days), S)
    for lineno, r in enumerate(rows, start=2):
        i, s = index[r[0]], int(r[1])
        if not 0 <= s < S:
            raise ValueError(f"line {lineno}: slot {s} outside 0..{S - 1}")
        for f, v in zip(BIN_FIELDS, r[2:]):
            if f == "n_trades":
                data[f][i, s] = int(v)
            elif v != "":
                data[f][i, s] = float(v)
            elif f == "traded_value":
                data[f][i, s] = 0.0
    return BinPanel(market, tick_size, np.array(days, dtype="datetime64[D]"), data,
                    stock_id=stock_id, spread_mode=spread_mode)
