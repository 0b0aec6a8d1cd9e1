"""Slow, literal re-implementations used as oracles."""
import math


def clean_reference(days, n_trades, vol, n_slots, threshold=0.8, eps=1e-6):
    """Day filter then zero-volatility substitution, bin by bin with plain Python.

    ``n_trades`` and ``vol`` are lists of per-day lists. Returns the retained
    day labels and their volatility rows (None for empty or unfillable bins).
    """
    kept = []
    for d, nt, v in zip(days, n_trades, vol):
        nonempty = sum(1 for x in nt if x > 0)
        if nonempty / n_slots >= threshold:
            kept.append((d, nt, v))
    out_days, out_vol = [], []
    prev_min = None
    for d, nt, v in kept:
        candidates = [x for x, n in zip(v, nt) if n > 0 and x > eps]
        day_min = min(candidates) if candidates else None
        row = []
        for x, n in zip(v, nt):
            if n == 0:
                row.append(None)
            elif x <= eps:
                fill = day_min if day_min is not None else prev_min
                row.append(fill)
            else:
                row.append(x)
        prev_min = day_min
        out_days.append(d)
        out_vol.append(row)
    return out_days, out_vol


def slot_mean_log(values):
    """Per-slot mean of logs over days, skipping None/NaN."""
    n_slots = len(values[0])
    out = []
    for s in range(n_slots):
        col = [math.log(r[s]) for r in values if r[s] is not None and not math.isnan(r[s])]
        out.append(sum(col) / len(col))
    return out
