"""Cross-sectional summaries: R²/lag tables by zone, liquidity-effect scatters, memory term.

Output files (all CSV, one header line):

``table2.csv``            zone,variable,model,mean_r2,std_r2,cell,n_stocks
``table3.csv``            zone,variable,ar_mean_lag,var_mean_lag,n_stocks
``scatter_ticks_r2.csv``  stock_id,zone,variable,avg_spread_ticks,tick_class,r2_ar,r2_var
``scatter_cap_first_coef.csv``  stock_id,zone,variable,norm_cap,first_lag_coef
``scatter_cap_lambda.csv``      stock_id,zone,variable,norm_cap,lambda
``scatter_cap_average.csv``     stock_id,zone,variable,norm_cap,norm_average
``scatter_r2_improvement.csv``  zone,variable,stock_id,improvement,ecdf
``quantile_curves.csv``   stock_id,variable,slot,median,q25,q75

The memory term ``lambda`` is the least-squares slope of ``-log|a_i|``
against the lag ``i`` over AR coefficients with ``|a_i| > 1e-6``: an
exponential-decay rate of coefficient magnitudes, so a larger value means a
shorter memory.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from typing import IO, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .binning import VARIABLES, BinPanel
from .linmodels import FittedModel, ModelSpec, fit_linear
from .selection import CVResult, grid_search
from .stationarize import quantile_curves, stationarize

logger = logging.getLogger(__name__)

LAMBDA_DEFINITION = "slope of -log|a_i| versus lag i over AR coefficients with |a_i| > 1e-6"

LARGE_TICK_MAX = 1.3
SMALL_TICK_MIN = 2.0


def tick_class(avg_spread_ticks: float) -> str:
    if not np.isfinite(avg_spread_ticks):
        return ""
    if avg_spread_ticks <= LARGE_TICK_MAX:
        return "large"
    if avg_spread_ticks >= SMALL_TICK_MIN:
        return "small"
    return "medium"


def cross_sectional_normalize(values: Mapping[str, float], zones: Mapping[str, str],
                              center: bool = True) -> Dict[str, float]:
    """Z-score values within each zone (``center=False`` only divides by the zone std).

    Standard deviations use the population divisor.
    """
    by_zone: Dict[str, List[str]] = {}
    for k in values:
        by_zone.setdefault(zones[k], []).append(k)
    out = {}
    for z, keys in by_zone.items():
        if len(keys) < 2:
            raise ValueError(f"zone {z!r} has a single stock; cannot normalize")
        arr = np.array([values[k] for k in keys], dtype=float)
        sd = float(np.std(arr))
        if not sd > 0:
            raise ValueError(f"zone {z!r} has zero dispersion; cannot normalize")
        mu = float(np.mean(arr)) if center else 0.0
        for k, x in zip(keys, arr):
            out[k] = (x - mu) / sd
    return out


def memory_lambda(model) -> float:
    """Decay rate of AR coefficient magnitudes; NaN with fewer than two usable lags.

    Accepts a ``FittedModel`` (uses the target's own-lag coefficients) or a
    plain sequence ``a_1, a_2, ...``.
    """
    if isinstance(model, FittedModel):
        sub = model.spec.subset
        if model.spec.target not in sub:
            return math.nan
        a = model.coefficients[sub.index(model.spec.target)]
    else:
        a = np.asarray(model, dtype=float)
    lags = np.arange(1, len(a) + 1)
    ok = np.abs(a) > 1e-6
    if ok.sum() < 2:
        return math.nan
    slope, _ = np.polyfit(lags[ok], -np.log(np.abs(a[ok])), 1)
    return float(slope)


@dataclass
class StockResult:
    """Everything measured on one stock; input to ``summarize``."""

    stock_id: str
    zone: str
    avg_spread_bp: float
    avg_spread_ticks: float
    avg_book: float
    avg_turnover: float
    avg_volatility: float
    cv: Dict[str, CVResult]
    ar_models: Dict[str, Optional[FittedModel]] = field(default_factory=dict)
    market_cap: Optional[float] = None
    quantiles: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=dict)


@dataclass
class StockSummary:
    stock_id: str
    zone: str
    avg_spread_bp: float
    avg_spread_ticks: float
    tick_class: str
    avg_book: float
    avg_turnover: float
    avg_volatility: float
    market_cap: Optional[float]
    best_ar: Dict[str, Tuple[int, float]]
    best_var: Dict[str, Tuple[Tuple[str, ...], int, float]]
    lambdas: Dict[str, float]
    first_coef: Dict[str, float]


@dataclass
class ZoneAggregate:
    zone: str
    n_stocks: int
    r2_ar: Dict[str, Tuple[float, float]]
    r2_var: Dict[str, Tuple[float, float]]
    lag_ar: Dict[str, float]
    lag_var: Dict[str, float]


def analyze_stock(panel: BinPanel, zone: str, market_cap: Optional[float] = None,
                  variables: Sequence[str] = VARIABLES, **grid_kw) -> StockResult:
    """Grid-search every target and fit the best AR model on the whole sample."""
    spread = panel.variable("spread")
    mid = 0.5 * (panel.variable("open") + panel.variable("close"))
    with np.errstate(invalid="ignore", divide="ignore"):
        bp = 1e4 * np.nanmean(spread / mid)
    cv = {t: grid_search(panel, t, **grid_kw) for t in variables}
    boundary = grid_kw.get("boundary", "session")
    series, _ = stationarize(panel, variables)
    models: Dict[str, Optional[FittedModel]] = {}
    for t in variables:
        lag, _ = cv[t].best_ar()
        models[t] = None
        if lag >= 1:
            try:
                models[t] = fit_linear(series, ModelSpec(t, (t,), lag), boundary, complete=variables)
            except (ValueError, np.linalg.LinAlgError) as exc:
                logger.warning("%s: AR fit for %s failed: %s", panel.stock_id, t, exc)
    quant = {v: quantile_curves(panel.variable(v)) for v in variables}
    return StockResult(
        stock_id=panel.stock_id, zone=zone, avg_spread_bp=float(bp),
        avg_spread_ticks=float(np.nanmean(panel.variable("spread_ticks"))),
        avg_book=float(np.nanmean(panel.variable("book"))),
        avg_turnover=float(np.nanmean(panel.variable("turnover"))),
        avg_volatility=float(np.nanmean(panel.variable("volatility"))),
        cv=cv, ar_models=models, market_cap=market_cap, quantiles=quant,
    )


def summarize(results: Sequence[StockResult],
              variables: Sequence[str] = VARIABLES) -> Tuple[List[StockSummary], List[ZoneAggregate]]:
    summaries = []
    for r in sorted(results, key=lambda r: r.stock_id):
        best_ar, best_var, lam, first = {}, {}, {}, {}
        for v in variables:
            cv = r.cv.get(v)
            if cv is None:
                best_ar[v], best_var[v] = (0, math.nan), ((), 0, math.nan)
            else:
                best_ar[v] = cv.best_ar()
                best_var[v] = (cv.best_subset, cv.best_lag, cv.best_r2)
            m = r.ar_models.get(v)
            lam[v] = memory_lambda(m) if m is not None else math.nan
            first[v] = m.coefficient(v, 1) if m is not None else math.nan
        summaries.append(StockSummary(
            r.stock_id, r.zone, r.avg_spread_bp, r.avg_spread_ticks, tick_class(r.avg_spread_ticks),
            r.avg_book, r.avg_turnover, r.avg_volatility, r.market_cap, best_ar, best_var, lam, first))

    aggregates = []
    for z in sorted({s.zone for s in summaries}):
        members = [s for s in summaries if s.zone == z]

        def ms(vals):
            a = np.array(vals, dtype=float)
            a = a[np.isfinite(a)]
            return (float(a.mean()), float(a.std())) if a.size else (math.nan, math.nan)

        aggregates.append(ZoneAggregate(
            zone=z, n_stocks=len(members),
            r2_ar={v: ms([s.best_ar[v][1] for s in members]) for v in variables},
            r2_var={v: ms([s.best_var[v][2] for s in members]) for v in variables},
            lag_ar={v: ms([s.best_ar[v][0] for s in members])[0] for v in variables},
            lag_var={v: ms([s.best_var[v][1] for s in members])[0] for v in variables},
        ))
    return summaries, aggregates


def format_cell(mean: float, std: float) -> str:
    """Render a mean with its standard deviation in parentheses, three decimals."""
    if not (np.isfinite(mean) and np.isfinite(std)):
        return ""
    return f"{mean:.3f} ({std:.3f})"


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "" if not np.isfinite(x) else repr(x)


REPORT_HEADERS = {
    "table2.csv": ("zone", "variable", "model", "mean_r2", "std_r2", "cell", "n_stocks"),
    "table3.csv": ("zone", "variable", "ar_mean_lag", "var_mean_lag", "n_stocks"),
    "scatter_ticks_r2.csv": ("stock_id", "zone", "variable", "avg_spread_ticks", "tick_class",
                             "r2_ar", "r2_var"),
    "scatter_cap_first_coef.csv": ("stock_id", "zone", "variable", "norm_cap", "first_lag_coef"),
    "scatter_cap_lambda.csv": ("stock_id", "zone", "variable", "norm_cap", "lambda"),
    "scatter_cap_average.csv": ("stock_id", "zone", "variable", "norm_cap", "norm_average"),
    "scatter_r2_improvement.csv": ("zone", "variable", "stock_id", "improvement", "ecdf"),
    "quantile_curves.csv": ("stock_id", "variable", "slot", "median", "q25", "q75"),
}

CAP_FILES = ("scatter_cap_first_coef.csv", "scatter_cap_lambda.csv", "scatter_cap_average.csv")


def _writer(out_dir: str, name: str):
    fh = open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_HEADERS[name])
    return fh, w


def intraday_quantile_curves(panel: BinPanel, variable: str):
    """Per-slot median, 25% and 75% quantiles of values scaled so each day averages 1."""
    return quantile_curves(panel.variable(variable))


def write_report(out_dir: str, results: Sequence[StockResult],
                 variables: Sequence[str] = VARIABLES) -> List[str]:
    """Write every report file into ``out_dir``; returns the file names written."""
    os.makedirs(out_dir, exist_ok=True)
    summaries, aggregates = summarize(results, variables)
    written = []

    fh, w = _writer(out_dir, "table2.csv")
    with fh:
        for a in aggregates:
            for v in variables:
                for model, (m, s) in (("AR", a.r2_ar[v]), ("VAR", a.r2_var[v])):
                    w.writerow((a.zone, v, model, _fmt(m), _fmt(s), format_cell(m, s), a.n_stocks))
    written.append("table2.csv")

    fh, w = _writer(out_dir, "table3.csv")
    with fh:
        for a in aggregates:
            for v in variables:
                w.writerow((a.zone, v, _fmt(a.lag_ar[v]), _fmt(a.lag_var[v]), a.n_stocks))
    written.append("table3.csv")

    fh, w = _writer(out_dir, "scatter_ticks_r2.csv")
    with fh:
        for s in summaries:
            for v in variables:
                w.writerow((s.stock_id, s.zone, v, _fmt(s.avg_spread_ticks), s.tick_class,
                            _fmt(s.best_ar[v][1]), _fmt(s.best_var[v][2])))
    written.append("scatter_ticks_r2.csv")

    fh, w = _writer(out_dir, "scatter_r2_improvement.csv")
    with fh:
        for z in sorted({s.zone for s in summaries}):
            for v in variables:
                imp = sorted(
                    ((s.best_var[v][2] - s.best_ar[v][1], s.stock_id) for s in summaries
                     if s.zone == z and np.isfinite(s.best_var[v][2] - s.best_ar[v][1])))
                for i, (d, sid) in enumerate(imp, start=1):
                    w.writerow((z, v, sid, _fmt(d), _fmt(i / len(imp))))
    written.append("scatter_r2_improvement.csv")

    fh, w = _writer(out_dir, "quantile_curves.csv")
    with fh:
        for r in sorted(results, key=lambda r: r.stock_id):
            for v in variables:
                if v not in r.quantiles:
                    continue
                med, q25, q75 = r.quantiles[v]
                for slot in range(len(med)):
                    w.writerow((r.stock_id, v, slot, _fmt(med[slot]), _fmt(q25[slot]), _fmt(q75[slot])))
    written.append("quantile_curves.csv")

    caps = {s.stock_id: s.market_cap for s in summaries
            if s.market_cap is not None and np.isfinite(s.market_cap)}
    if len(caps) < len(summaries):
        logger.warning("%d stocks lack a market capitalization; their cap fields are blank",
                       len(summaries) - len(caps))
    zones = {s.stock_id: s.zone for s in summaries}
    norm_cap = _normalize_by_zone(caps, zones, center=False)
    averages = {"volatility": "avg_volatility", "spread": "avg_spread_bp", "book": "avg_book",
                "turnover": "avg_turnover"}
    fh1, w1 = _writer(out_dir, "scatter_cap_first_coef.csv")
    fh2, w2 = _writer(out_dir, "scatter_cap_lambda.csv")
    fh3, w3 = _writer(out_dir, "scatter_cap_average.csv")
    with fh1, fh2, fh3:
        for v in variables:
            attr = averages.get(v)
            norm_avg = {}
            if attr is not None:
                norm_avg = _normalize_by_zone({s.stock_id: getattr(s, attr) for s in summaries}, zones)
            for s in summaries:
                c = norm_cap.get(s.stock_id)
                w1.writerow((s.stock_id, s.zone, v, _fmt(c), _fmt(s.first_coef[v])))
                w2.writerow((s.stock_id, s.zone, v, _fmt(c), _fmt(s.lambdas[v])))
                if attr is not None:
                    w3.writerow((s.stock_id, s.zone, v, _fmt(c), _fmt(norm_avg.get(s.stock_id))))
    written.extend(CAP_FILES)
    return written


def _normalize_by_zone(values: Mapping[str, float], zones: Mapping[str, str],
                       center: bool = True) -> Dict[str, float]:
    """``cross_sectional_normalize`` zone by zone; zones it cannot handle are left blank."""
    finite = {k: v for k, v in values.items() if v is not None and np.isfinite(v)}
    out = {}
    for z in sorted({zones[k] for k in finite}):
        part = {k: v for k, v in finite.items() if zones[k] == z}
        try:
            out.update(cross_sectional_normalize(part, zones, center))
        except ValueError as exc:
            logger.warning("%s", exc)
    return out


META_HEADER = ("stock_id", "zone", "market_cap", "free_float")


def read_metadata(stream: IO[str]) -> List[dict]:
    reader = csv.DictReader(stream)
    if tuple(reader.fieldnames or ()) != META_HEADER:
        raise ValueError(f"metadata CSV header must be {','.join(META_HEADER)}")
    rows = []
    for r in reader:
        rows.append({
            "stock_id": r["stock_id"],
            "zone": r["zone"],
            "market_cap": float(r["market_cap"]) if r["market_cap"] else None,
            "free_float": float(r["free_float"]) if r["free_float"] else None,
        })
    return rows
