"""Synthetic panels and tick streams with known ground truth.

Panels follow ``x(d, slot) = profile(slot) * exp(y(d, slot))`` where ``y`` is a
Gaussian VAR path laid day after day onto the bin grid. Tick streams follow
a driftless log-Brownian price whose intra-bin extremes are drawn exactly from
the Brownian-bridge law between consecutive trades, so the trade-based
high/low equals the high/low of the continuous path.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Iterator, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import lfilter

from .binning import (
    VARIABLES, BinPanel, ConfigError, MarketConfig, bin_start_ns,
    empty_panel_data, market_config,
)
from .ingest import EnrichedTrades, Quotes, Trades
from .stationarize import PanelSeries

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


class UnstableModelError(ValueError):
    pass


DEFAULT_LEVELS = {"volatility": 1e-4, "spread": 0.02, "book": 500.0, "turnover": 1e5}


def u_shape(n_slots: int, amplitude: float = 1.0) -> np.ndarray:
    """Intraday U-shaped multiplier with mean-of-log zero."""
    z = np.linspace(-1.0, 1.0, n_slots)
    log_shape = amplitude * (z ** 2 - np.mean(z ** 2))
    return np.exp(log_shape)


def default_profiles(n_slots: int, variables: Sequence[str] = VARIABLES) -> Dict[str, np.ndarray]:
    amp = {"volatility": 1.0, "spread": -0.3, "book": -0.5, "turnover": 1.2}
    return {v: DEFAULT_LEVELS.get(v, 1.0) * u_shape(n_slots, amp.get(v, 0.0)) for v in variables}


@dataclass
class SynthSpec:
    """Generating model for a synthetic panel.

    ``coefficients[i - 1][a, b]`` is the loading of variable ``a`` on
    variable ``b`` at lag ``i``.
    """

    n_days: int
    market: MarketConfig
    coefficients: np.ndarray
    innovation_cov: np.ndarray
    profiles: Optional[Dict[str, np.ndarray]] = None
    variables: Tuple[str, ...] = VARIABLES
    seed: int = 0
    tick_size: float = 0.01
    base_price: float = 100.0
    trades_per_bin: int = 100
    start_date: str = "2015-01-05"
    burn_in: Optional[int] = None

    def __post_init__(self):
        k = len(self.variables)
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1, k, k)
        self.innovation_cov = np.asarray(self.innovation_cov, dtype=float).reshape(k, k)
        if self.profiles is None:
            self.profiles = default_profiles(self.market.bins_per_day, self.variables)
        self.profiles = {v: np.asarray(p, dtype=float) for v, p in self.profiles.items()}

    @property
    def max_lag(self) -> int:
        return self.coefficients.shape[0]

    def spectral_radius(self) -> float:
        p, k, _ = self.coefficients.shape
        comp = np.zeros((p * k, p * k))
        comp[:k, :] = np.hstack(list(self.coefficients))
        comp[k:, :-k] = np.eye((p - 1) * k)
        return float(np.max(np.abs(np.linalg.eigvals(comp))))

    def validate(self) -> None:
        if self.n_days < 1:
            raise ConfigError("n_days must be >= 1")
        rho = self.spectral_radius()
        if not rho < 1:
            raise UnstableModelError(f"generating model is not stable: spectral radius {rho:.6g} >= 1")
        cov = self.innovation_cov
        if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() < -1e-12:
            raise ConfigError("innovation covariance must be symmetric positive semi-definite")
        S = self.market.bins_per_day
        for v in self.variables:
            prof = self.profiles.get(v)
            if prof is None or prof.shape != (S,) or not np.all(prof > 0):
                raise ConfigError(f"profile for {v} must hold {S} positive multipliers")

    def to_record(self) -> dict:
        return {
            "n_days": self.n_days,
            "market": self.market.to_dict(),
            "variables": list(self.variables),
            "coefficients": self.coefficients.tolist(),
            "innovation_cov": self.innovation_cov.tolist(),
            "profiles": {v: p.tolist() for v, p in self.profiles.items()},
            "seed": self.seed,
            "tick_size": self.tick_size,
            "base_price": self.base_price,
            "start_date": self.start_date,
            "spectral_radius": self.spectral_radius(),
        }


def ar_spec(n_days: int, market: MarketConfig, coefs: Mapping[str, Sequence[float]],
            noise_var: float = 1.0, **kw) -> SynthSpec:
    """Independent AR processes per variable (``coefs[v]`` = lag-1.. coefficients)."""
    variables = kw.pop("variables", VARIABLES)
    p = max([len(c) for c in coefs.values()] + [1])
    A = np.zeros((p, len(variables), len(variables)))
    for v, c in coefs.items():
        j = variables.index(v)
        A[: len(c), j, j] = c
    return SynthSpec(n_days, market, A, noise_var * np.eye(len(variables)), variables=variables, **kw)


def load_spec(text: str, seed: Optional[int] = None) -> SynthSpec:
    """Build a ``SynthSpec`` from TOML text.

    Recognised keys: ``n_days``, ``market`` (preset name or table),
    ``seed``, ``tick_size``, ``base_price``, ``start_date``, ``lags``,
    ``[[coefficient]]`` tables with ``effect``/``cause``/``lag``/``value``,
    ``innovation_var`` (scalar or per-variable table) or ``innovation_cov`` (matrix),
    and ``[profiles.<variable>]`` tables with ``level`` and ``amplitude`` or
    an explicit ``values`` list.
    """
    d = tomllib.loads(text)
    m = d.get("market", "US")
    market = market_config(m) if isinstance(m, str) else MarketConfig.from_dict(m)
    variables = tuple(d.get("variables", VARIABLES))
    k = len(variables)
    entries = d.get("coefficient", [])
    p = max([int(d.get("lags", 1))] + [int(e["lag"]) for e in entries])
    A = np.zeros((p, k, k))
    for e in entries:
        A[int(e["lag"]) - 1, variables.index(e["effect"]), variables.index(e["cause"])] = float(e["value"])
    if "innovation_cov" in d:
        cov = np.asarray(d["innovation_cov"], dtype=float)
    else:
        iv = d.get("innovation_var", {})
        if not isinstance(iv, dict):
            iv = {v: iv for v in variables}
        cov = np.diag([float(iv.get(v, 1.0)) for v in variables])
    S = market.bins_per_day
    profiles = default_profiles(S, variables)
    for v, pr in d.get("profiles", {}).items():
        if "values" in pr:
            profiles[v] = np.asarray(pr["values"], dtype=float)
        else:
            profiles[v] = float(pr.get("level", 1.0)) * u_shape(S, float(pr.get("amplitude", 0.0)))
    spec = SynthSpec(
        n_days=int(d["n_days"]), market=market, coefficients=A, innovation_cov=cov,
        profiles=profiles, variables=variables,
        seed=int(seed if seed is not None else d.get("seed", 0)),
        tick_size=float(d.get("tick_size", 0.01)), base_price=float(d.get("base_price", 100.0)),
        start_date=str(d.get("start_date", "2015-01-05")),
    )
    spec.validate()
    return spec


def _matrix_sqrt(cov: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(cov)
    return V * np.sqrt(np.clip(w, 0.0, None))


def simulate_var(spec: SynthSpec) -> Dict[str, PanelSeries]:
    """Gaussian VAR path of ``n_days * bins_per_day`` steps after burn-in."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    S = spec.market.bins_per_day
    N = spec.n_days * S
    p, k, _ = spec.coefficients.shape
    burn = spec.burn_in if spec.burn_in is not None else max(10 * p, 500)
    e = rng.standard_normal((N + burn, k)) @ _matrix_sqrt(spec.innovation_cov).T
    A = spec.coefficients
    off_diag = A.copy()
    for i in range(p):
        np.fill_diagonal(off_diag[i], 0.0)
    if not np.any(off_diag):
        y = np.empty_like(e)
        for j in range(k):
            y[:, j] = lfilter([1.0], np.r_[1.0, -A[:, j, j]], e[:, j])
    else:
        y = np.zeros_like(e)
        for t in range(N + burn):
            acc = e[t].copy()
            for i in range(min(p, t)):
                acc += A[i] @ y[t - 1 - i]
            y[t] = acc
    y = y[burn:]
    days = trading_days(spec.start_date, spec.n_days)
    return {
        v: PanelSeries(v, days, y[:, j].reshape(spec.n_days, S), np.zeros((spec.n_days, S), bool),
                       spec.market.session_starts)
        for j, v in enumerate(spec.variables)
    }


def trading_days(start: str, n: int) -> np.ndarray:
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return np.busday_offset(first, np.arange(n), roll="forward").astype("datetime64[D]")


def synthesize_panel(spec: SynthSpec, stock_id: str = "synthetic") -> BinPanel:
    """Lay ``profile * exp(y)`` onto a bin panel with consistent OHLC.

    Open and close sit at ``base_price``; high and low are placed
    symmetrically in log space so that the Garman-Klass estimate of every
    bin equals its volatility value.
    """
    series = simulate_var(spec)
    S = spec.market.bins_per_day
    D = spec.n_days
    data = empty_panel_data(D, S)
    x = {v: spec.profiles[v][None, :] * np.exp(series[v].values) for v in spec.variables}
    if "volatility" in x:
        vol = x["volatility"]
    else:
        vol = np.full((D, S), DEFAULT_LEVELS["volatility"])
    half = np.sqrt(vol / 2.0)
    data["open"] = np.full((D, S), spec.base_price)
    data["close"] = data["open"].copy()
    data["high"] = spec.base_price * np.exp(half)
    data["low"] = spec.base_price * np.exp(-half)
    data["volatility"] = vol
    data["spread"] = x.get("spread", np.full((D, S), DEFAULT_LEVELS["spread"]))
    data["book_size"] = x.get("book", np.full((D, S), DEFAULT_LEVELS["book"]))
    data["traded_value"] = x.get("turnover", np.full((D, S), DEFAULT_LEVELS["turnover"]))
    data["spread_ticks"] = data["spread"] / spec.tick_size
    data["n_trades"] = np.full((D, S), spec.trades_per_bin, dtype=np.int64)
    return BinPanel(spec.market, spec.tick_size, series[spec.variables[0]].days, data,
                    stock_id=stock_id)


# ---------------------------------------------------------------- tick streams

def iter_gbm_ticks(
    sigma2: Union[float, np.ndarray],
    trades_per_bin: int,
    n_days: int,
    market: MarketConfig,
    seed: int = 0,
    initial_price: float = 100.0,
    spread: float = 0.02,
    bid_size: float = 300.0,
    ask_size: float = 500.0,
    start_date: str = "2015-01-05",
    chunk_days: int = 50,
) -> Iterator[EnrichedTrades]:
    """Yield the GBM tick stream in chunks of ``chunk_days`` days.

    Each bin holds ``trades_per_bin`` trades: one at the bin's opening
    instant, one a nanosecond before its end, ``trades_per_bin - 4`` at
    uniform times in between, and two at the continuous-path maximum and
    minimum (drawn from the Brownian-bridge law on the segment where each
    occurs). ``sigma2`` is the log-price variance per bin, scalar or shaped
    ``(n_days, bins_per_day)``. Every trade carries a quote stamped one
    nanosecond earlier, straddling the trade price by ``spread``.
    """
    if trades_per_bin < 4:
        raise ValueError("trades_per_bin must be >= 4")
    S = market.bins_per_day
    var = np.broadcast_to(np.asarray(sigma2, dtype=float), (n_days, S))
    if np.any(var < 0):
        raise ValueError("sigma2 must be non-negative")
    rng = np.random.default_rng(seed)
    days = trading_days(start_date, n_days)
    starts = bin_start_ns(days, market)
    dtau = market.bin_ns
    m = trades_per_bin - 2  # path points per bin
    level = 0.0  # running log-price
    log_p0 = np.log(initial_price)
    for d0 in range(0, n_days, chunk_days):
        d1 = min(n_days, d0 + chunk_days)
        v = var[d0:d1].reshape(-1)
        t0 = starts[d0:d1].reshape(-1)
        nb = len(v)
        inner = np.sort(rng.random((nb, m - 2)), axis=1)
        frac = np.hstack([np.zeros((nb, 1)), inner, np.full((nb, 1), (dtau - 1) / dtau)])
        du = np.diff(frac, axis=1)
        steps = rng.standard_normal((nb, m - 1)) * np.sqrt(v[:, None] * du)
        path = np.hstack([np.zeros((nb, 1)), np.cumsum(steps, axis=1)])
        offsets = level + np.r_[0.0, np.cumsum(path[:, -1])[:-1]]
        path += offsets[:, None]
        level = float(path[-1, -1])
        a, b = path[:, :-1], path[:, 1:]
        seg_var = v[:, None] * du
        hi = 0.5 * (a + b + np.sqrt((b - a) ** 2 - 2.0 * seg_var * np.log(rng.random(a.shape))))
        lo = 0.5 * (a + b - np.sqrt((b - a) ** 2 - 2.0 * seg_var * np.log(rng.random(a.shape))))
        jh = np.argmax(hi, axis=1)
        jl = np.argmin(lo, axis=1)
        r = np.arange(nb)
        mid = 0.5 * (frac[:, :-1] + frac[:, 1:])
        times_frac = np.hstack([frac, mid[r, jh][:, None], mid[r, jl][:, None]])
        logs = np.hstack([path, hi[r, jh][:, None], lo[r, jl][:, None]])
        ts = t0[:, None] + np.floor(times_frac * dtau).astype(np.int64)
        order = np.argsort(ts, axis=1, kind="stable")
        ts = np.take_along_axis(ts, order, axis=1).ravel()
        price = np.exp(log_p0 + np.take_along_axis(logs, order, axis=1).ravel())
        qty = 100.0 * rng.integers(1, 10, size=price.shape)
        trades = Trades(ts, price, qty)
        n = len(ts)
        quotes = Quotes(ts - 1, price - spread / 2, price + spread / 2,
                        np.full(n, bid_size), np.full(n, ask_size))
        yield EnrichedTrades(trades, quotes, 0)


def simulate_gbm_ticks(sigma2, trades_per_bin: int, n_days: int, market: MarketConfig,
                       **kw) -> EnrichedTrades:
    """Whole GBM tick stream as one ``EnrichedTrades`` (see ``iter_gbm_ticks``)."""
    return EnrichedTrades.concat(list(iter_gbm_ticks(sigma2, trades_per_bin, n_days, market, **kw)))


def write_truth(stream, spec: SynthSpec) -> None:
    stream.write(json.dumps(spec.to_record(), sort_keys=True) + "\n")
