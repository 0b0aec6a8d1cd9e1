"""Granger chi-squared causality tests and lagged cross-correlations."""
from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass
from typing import IO, Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .linmodels import least_squares, max_usable_lag, segment_positions
from .stationarize import PanelSeries

logger = logging.getLogger(__name__)

SeriesLike = Union[PanelSeries, np.ndarray, Sequence[float]]


@dataclass
class GrangerResult:
    cause: str
    effect: str
    lag: int
    statistic: float
    dof: int
    p_value: float
    reject: bool
    alpha: float = 0.001
    n_obs: int = 0
    degenerate: bool = False
    error: str = ""


def _as_series(x: SeriesLike, name: str) -> PanelSeries:
    if isinstance(x, PanelSeries):
        return x
    return PanelSeries.from_array(np.asarray(x, dtype=float), variable=name)


def _aligned(a: PanelSeries, b: PanelSeries):
    if a.values.shape != b.values.shape:
        raise ValueError("series are not aligned on the same (day, slot) grid")
    return a.values.ravel(), b.values.ravel(), ~a.missing.ravel(), ~b.missing.ravel()


def granger_test(
    effect: SeriesLike,
    cause: SeriesLike,
    lag: int,
    alpha: float = 0.001,
    boundary: str = "session",
    mode: str = "joint",
    effect_name: str = "effect",
    cause_name: str = "cause",
) -> GrangerResult:
    """Wald chi-squared test of "``cause`` does not Granger-cause ``effect``".

    The restricted model regresses the effect on a constant and its own
    ``lag`` lags; the unrestricted one adds the cause's lags 1..``lag``
    (``mode="joint"``) or only its lag ``lag`` (``mode="single"``). The
    statistic is ``n * (SSR_r - SSR_u) / SSR_u``, chi-squared with one
    degree of freedom per added cause column.
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if mode not in ("joint", "single"):
        raise ValueError(f"unknown mode {mode!r}")
    e = _as_series(effect, effect_name)
    c = _as_series(cause, cause_name)
    ev, cv, e_ok, c_ok = _aligned(e, c)
    pos = segment_positions(e.values.shape, e.session_starts, boundary)
    L = max_usable_lag(e_ok & c_ok, pos)
    rows = np.flatnonzero(e_ok & (L >= lag))
    n = len(rows)
    cause_lags = range(1, lag + 1) if mode == "joint" else (lag,)
    dof = len(cause_lags)
    if n < 2 * lag + 2 + 10:
        raise ValueError(f"only {n} usable rows for a lag-{lag} Granger test")

    own = [ev[rows - i] for i in range(1, lag + 1)]
    Xr = np.column_stack([np.ones(n)] + own)
    Xu = np.column_stack([Xr] + [cv[rows - i] for i in cause_lags])
    y = ev[rows]
    names_u = ["intercept"] + [f"own{i}" for i in range(1, lag + 1)] + [f"cause{i}" for i in cause_lags]
    _, res_r, rank_r = least_squares(Xr, y, names_u[: Xr.shape[1]])
    _, res_u, rank_u = least_squares(Xu, y, names_u)
    ssr_r = float(res_r @ res_r)
    ssr_u = float(res_u @ res_u)
    if rank_u == rank_r:
        # cause columns add nothing (e.g. an all-zero cause)
        return GrangerResult(cause_name, effect_name, lag, 0.0, dof, 1.0, False, alpha, n)
    if not ssr_u > 0:
        return GrangerResult(cause_name, effect_name, lag, math.nan, dof, math.nan, False, alpha, n,
                             degenerate=True)
    stat = max(0.0, n * (ssr_r - ssr_u) / ssr_u)
    p = float(stats.chi2.sf(stat, dof))
    return GrangerResult(cause_name, effect_name, lag, stat, dof, p, p < alpha, alpha, n)


def granger_grid(series: Mapping[str, PanelSeries], max_lag: int, alpha: float = 0.001,
                 boundary: str = "session", mode: str = "joint") -> List[GrangerResult]:
    """All ordered (cause, effect) pairs x lags 1..max_lag; failing cells carry ``error``."""
    names = list(series)
    out = []
    for cause, effect in itertools.permutations(names, 2):
        for p in range(1, max_lag + 1):
            try:
                out.append(granger_test(series[effect], series[cause], p, alpha, boundary, mode,
                                        effect_name=effect, cause_name=cause))
            except (ValueError, np.linalg.LinAlgError) as exc:
                logger.warning("granger %s->%s lag %d failed: %s", cause, effect, p, exc)
                out.append(GrangerResult(cause, effect, p, math.nan, 0, math.nan, False, alpha,
                                         error=str(exc)))
    return out


def granger_summary(results_by_stock: Mapping[str, Sequence[GrangerResult]]) -> List[dict]:
    """Share of stocks rejecting no-causality per (pair, lag); retained share is ``1 - prop_rejected``."""
    cells: Dict[Tuple[str, int], List[bool]] = {}
    for results in results_by_stock.values():
        for r in results:
            if r.error or r.degenerate:
                continue
            cells.setdefault((f"{r.cause}->{r.effect}", r.lag), []).append(r.reject)
    return [
        {"pair": pair, "lag": lag, "prop_rejected": float(np.mean(v)), "n_stocks": len(v)}
        for (pair, lag), v in cells.items()
    ]


GRANGER_HEADER = ("cause", "effect", "lag", "statistic", "dof", "p_value", "reject")
SUMMARY_HEADER = ("pair", "lag", "prop_rejected", "n_stocks")


def _fmt(x: float) -> str:
    return "" if not np.isfinite(x) else repr(float(x))


def write_granger(stream: IO[str], results: Iterable[GrangerResult]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(GRANGER_HEADER)
    for r in results:
        w.writerow((r.cause, r.effect, r.lag, _fmt(r.statistic), r.dof, _fmt(r.p_value), int(r.reject)))


def write_granger_summary(stream: IO[str], rows: Iterable[dict]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for r in rows:
        w.writerow((r["pair"], r["lag"], _fmt(r["prop_rejected"]), r["n_stocks"]))


# ---------------------------------------------------------------- correlations

@dataclass
class LaggedCorrelationTable:
    """``values[i, j, k]`` is the Pearson correlation of ``variables[i]_t`` with ``variables[j]_{t-k}``."""

    variables: Tuple[str, ...]
    values: np.ndarray

    @property
    def max_lag(self) -> int:
        return self.values.shape[2] - 1

    def get(self, u: str, v: str, k: int) -> float:
        return float(self.values[self.variables.index(u), self.variables.index(v), k])


def pair_correlation(u: PanelSeries, v: PanelSeries, k: int, boundary: str = "session") -> float:
    """corr(u_t, v_{t-k}) over pairs in the same segment with both values present (k may be negative)."""
    uv, vv, u_ok, v_ok = _aligned(u, v)
    pos = segment_positions(u.values.shape, u.session_starts, boundary)
    seg = np.arange(len(pos)) - pos  # flat index of the segment's first bin
    t = np.arange(len(uv))
    s = t - k
    inside = (s >= 0) & (s < len(uv))
    t, s = t[inside], s[inside]
    ok = (seg[t] == seg[s]) & u_ok[t] & v_ok[s]
    a, b = uv[t[ok]], vv[s[ok]]
    if len(a) < 2:
        return math.nan
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    if not den > 0:
        return math.nan
    return float(np.clip((a @ b) / den, -1.0, 1.0))


def lagged_correlations(series: Mapping[str, PanelSeries], max_lag: int = 9,
                        boundary: str = "session") -> LaggedCorrelationTable:
    names = tuple(series)
    out = np.full((len(names), len(names), max_lag + 1), np.nan)
    for i, u in enumerate(names):
        for j, v in enumerate(names):
            for k in range(max_lag + 1):
                out[i, j, k] = pair_correlation(series[u], series[v], k, boundary)
    return LaggedCorrelationTable(names, out)


CORR_HEADER = ("u", "v", "lag", "correlation")


def write_correlations(stream: IO[str], table: LaggedCorrelationTable) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CORR_HEADER)
    for i, u in enumerate(table.variables):
        for j, v in enumerate(table.variables):
            for k in range(table.max_lag + 1):
                w.writerow((u, v, k, _fmt(table.values[i, j, k])))
