"""The two data-cleaning rules: incomplete-day removal and zero-volatility substitution."""
from __future__ import annotations

import json
import logging
from typing import IO, Iterable, List, Tuple

import numpy as np

from .binning import BinPanel

logger = logging.getLogger(__name__)


def filter_incomplete_days(
    panel: BinPanel,
    threshold: float = 0.8,
    exclude_dates: Iterable = (),
) -> Tuple[BinPanel, List[dict]]:
    """Drop days whose share of non-empty bins is below ``threshold``.

    The share is taken against the market's full bin count. Dates listed in
    ``exclude_dates`` (half days, say) are dropped regardless.
    """
    excluded = {np.datetime64(d, "D") for d in exclude_dates}
    ratio = (~panel.empty).sum(axis=1) / panel.n_slots
    keep = np.ones(panel.n_days, dtype=bool)
    records = []
    for i, d in enumerate(panel.days):
        if d in excluded:
            keep[i] = False
            records.append({"event": "day_removed", "date": str(d), "ratio": float(ratio[i]),
                            "reason": "excluded"})
        elif ratio[i] < threshold:
            keep[i] = False
            records.append({"event": "day_removed", "date": str(d), "ratio": float(ratio[i]),
                            "reason": "incomplete"})
    if records:
        logger.info("removed %d of %d days", len(records), panel.n_days)
    return panel.select_days(keep), records


def substitute_zero_volatility(panel: BinPanel, eps: float = 1e-6) -> Tuple[BinPanel, List[dict]]:
    """Replace volatilities at or below ``eps`` in non-empty bins.

    The replacement is the smallest value above ``eps`` observed (before any
    substitution) on the same day, else on the previous day of the panel.
    Bins with neither are set to NaN and counted as missing.
    """
    out = panel.copy()
    vol = out.data["volatility"]
    original = panel.data["volatility"]
    live = ~panel.empty
    records = []
    prev_min = np.nan
    for i, d in enumerate(panel.days):
        row = original[i]
        ok = live[i] & (row > eps)
        day_min = row[ok].min() if ok.any() else np.nan
        low = live[i] & (row <= eps)
        n = int(low.sum())
        if n:
            fill = day_min if np.isfinite(day_min) else prev_min
            if np.isfinite(fill):
                vol[i, low] = fill
                records.append({"event": "substitution", "date": str(d), "count": n,
                                "value": float(fill),
                                "source": "same_day" if np.isfinite(day_min) else "previous_day"})
            else:
                vol[i, low] = np.nan
                records.append({"event": "missing", "date": str(d), "count": n})
        prev_min = day_min
    return out, records


def write_report(stream: IO[str], records: Iterable[dict]) -> None:
    for r in records:
        stream.write(json.dumps(r, sort_keys=True) + "\n")
