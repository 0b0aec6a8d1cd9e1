"""Intraday seasonality removal on log-variables, and its exact inverse."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import IO, Dict, Iterable, Optional, Tuple

import numpy as np

from .binning import VARIABLES, BinPanel, DomainError


@dataclass
class SeasonalProfile:
    variable: str
    mean_log: np.ndarray
    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    n_days: int

    @property
    def n_slots(self) -> int:
        return len(self.mean_log)


@dataclass
class PanelSeries:
    """A (day x slot) series; ``missing`` marks bins without a usable value.

    ``session_starts`` lists the slots that open a continuous session, so
    lag windows can be kept from crossing a lunch break.
    """

    variable: str
    days: np.ndarray
    values: np.ndarray
    missing: np.ndarray
    session_starts: Tuple[int, ...] = (0,)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.missing = np.asarray(self.missing, dtype=bool) | ~np.isfinite(self.values)
        if self.values.ndim != 2:
            raise ValueError("PanelSeries values must be 2-D (day x slot)")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def select_days(self, sl) -> "PanelSeries":
        return replace(self, days=self.days[sl], values=self.values[sl], missing=self.missing[sl])

    @classmethod
    def from_array(cls, values, variable: str = "x", n_slots: Optional[int] = None,
                   session_starts: Tuple[int, ...] = (0,)) -> "PanelSeries":
        """Wrap a 1-D array as a single day (or as days of ``n_slots``)."""
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(1, -1) if n_slots is None else v.reshape(-1, n_slots)
        days = np.arange(v.shape[0]).astype("datetime64[D]")
        return cls(variable, days, v, ~np.isfinite(v), session_starts)


def log_values(panel: BinPanel, variable: str) -> np.ndarray:
    """Log of a panel variable, NaN where the bin is empty or the value missing."""
    x = panel.variable(variable)
    live = np.isfinite(x)
    if np.any(x[live] <= 0):
        d, s = np.argwhere(live & (x <= 0))[0]
        raise DomainError(f"{variable} is non-positive on {panel.days[d]} slot {s}; clean the panel first")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(live, np.log(np.where(live, x, 1.0)), np.nan)


def _slot_mean_log(logx: np.ndarray) -> np.ndarray:
    counts = np.isfinite(logx).sum(axis=0)
    if np.any(counts == 0):
        raise ValueError(f"slot {int(np.flatnonzero(counts == 0)[0])} has no available days")
    return np.nansum(logx, axis=0) / counts


def quantile_curves(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-slot median, 25% and 75% quantiles of values divided by their day mean."""
    with np.errstate(invalid="ignore"):
        norm = x / np.nanmean(x, axis=1, keepdims=True)
    q = np.nanquantile(norm, [0.5, 0.25, 0.75], axis=0)
    return q[0], q[1], q[2]


def seasonal_profile(panel: BinPanel, variable: str, days=None) -> SeasonalProfile:
    """Per-slot mean of log values over the available days.

    ``days`` optionally restricts estimation to a slice or mask of days
    (used to fit the profile on a training window only).
    """
    logx = log_values(panel, variable)
    x = panel.variable(variable)
    if days is not None:
        logx, x = logx[days], x[days]
    mean_log = _slot_mean_log(logx)
    med, q25, q75 = quantile_curves(x)
    return SeasonalProfile(variable, mean_log, med, q25, q75, n_days=int(logx.shape[0]))


def deseasonalize(panel: BinPanel, variable: str, profile: SeasonalProfile) -> PanelSeries:
    """``log x(d, slot) - profile(slot)``; missing bins propagate."""
    if profile.n_slots != panel.n_slots:
        raise ValueError("profile does not cover every slot of the panel")
    logx = log_values(panel, variable)
    y = logx - profile.mean_log[None, :]
    return PanelSeries(variable, panel.days.copy(), y, ~np.isfinite(y),
                       panel.market.session_starts)


def reseasonalize(series: PanelSeries, profile: SeasonalProfile) -> np.ndarray:
    """Inverse of ``deseasonalize``: ``exp(y + profile)``, NaN where missing."""
    if profile.n_slots != series.values.shape[1]:
        raise ValueError("profile does not cover every slot of the series")
    out = np.exp(series.values + profile.mean_log[None, :])
    out[series.missing] = np.nan
    return out


def stationarize(panel: BinPanel, variables: Iterable[str] = VARIABLES,
                 days=None) -> Tuple[Dict[str, PanelSeries], Dict[str, SeasonalProfile]]:
    """Deseasonalize several variables at once with profiles fit on ``days``."""
    series, profiles = {}, {}
    for v in variables:
        profiles[v] = seasonal_profile(panel, v, days)
        series[v] = deseasonalize(panel, v, profiles[v])
    return series, profiles


PROFILE_HEADER = ("slot", "mean_log", "median", "q25", "q75")
SERIES_HEADER = ("date", "slot", "value", "missing")


def _fmt(x: float) -> str:
    return "" if not np.isfinite(x) else repr(float(x))


def write_profile(stream: IO[str], profile: SeasonalProfile) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(PROFILE_HEADER)
    for s in range(profile.n_slots):
        w.writerow((s, _fmt(profile.mean_log[s]), _fmt(profile.median[s]),
                    _fmt(profile.q25[s]), _fmt(profile.q75[s])))


def read_profile(stream: IO[str], variable: str = "", n_days: int = 0) -> SeasonalProfile:
    reader = csv.reader(stream)
    if tuple(next(reader)) != PROFILE_HEADER:
        raise ValueError(f"profile CSV header must be {','.join(PROFILE_HEADER)}")
    rows = [r for r in reader if r]
    cols = np.array([[float(v) if v != "" else np.nan for v in r[1:]] for r in rows]).reshape(-1, 4)
    return SeasonalProfile(variable, cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3], n_days)


def write_series(stream: IO[str], series: PanelSeries) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(SERIES_HEADER)
    for i, d in enumerate(series.days.astype(str).tolist()):
        for s in range(series.values.shape[1]):
            miss = bool(series.missing[i, s])
            w.writerow((d, s, "" if miss else _fmt(series.values[i, s]), int(miss)))
