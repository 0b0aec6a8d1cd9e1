"""Hyperparameter search over (explanatory subset, lag) with overlapping train/validation batches.

Every (subset, lag) pair is scored on every batch. Instead of refitting
~12,800 regressions per target from raw rows, each batch builds one Gram
matrix of ``[1, all lags of all variables, target]`` per "maximum usable
lag" bucket; the Gram of any spec is then a sub-block of a suffix sum of
those buckets, and both the training solve and the validation R² follow
from sub-blocks alone.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .binning import VARIABLES, BinPanel
from .linmodels import canonical_subset, max_usable_lag, segment_positions
from .stationarize import PanelSeries, log_values

logger = logging.getLogger(__name__)

SubsetKey = Tuple[str, ...]


@dataclass
class BatchScheme:
    n_batches: int
    train_days: int
    valid_days: int
    windows: List[Tuple[Tuple[int, int], Tuple[int, int]]]


def make_batches(n_days: int, n_batches: int = 20, train: int = 150, valid: int = 150) -> BatchScheme:
    """Equally spaced train/validation windows; the first starts at day 0, the last ends at ``n_days``."""
    if n_batches < 1:
        raise ValueError("n_batches must be >= 1")
    if n_days < train + valid:
        raise ValueError(f"{n_days} days is fewer than train + valid = {train + valid}")
    slack = n_days - train - valid
    if n_batches == 1:
        starts = [0]
    else:
        # round-half-up of i * slack / (n_batches - 1), in exact integer arithmetic
        m = n_batches - 1
        starts = [(2 * i * slack + m) // (2 * m) for i in range(n_batches)]
    windows = [((s, s + train), (s + train, s + train + valid)) for s in starts]
    return BatchScheme(n_batches, train, valid, windows)


def all_subsets(variables: Sequence[str] = VARIABLES) -> List[SubsetKey]:
    out = []
    for r in range(len(variables) + 1):
        out.extend(itertools.combinations(canonical_subset(variables), r))
    return out


def subset_label(subset: SubsetKey) -> str:
    return "+".join(subset) if subset else "none"


def parse_subset_label(label: str) -> SubsetKey:
    return () if label == "none" else canonical_subset(label.split("+"))


@dataclass
class Score:
    mean: float
    std: float
    n_used: int


@dataclass
class CVResult:
    target: str
    scores: Dict[Tuple[SubsetKey, int], Score]
    best_subset: SubsetKey
    best_lag: int
    best_r2: float
    n_batches: int = 0
    profile_mode: str = "train"
    boundary: str = "session"
    variables: Tuple[str, ...] = VARIABLES
    validation_rows: str = "common"

    def best_among(self, subsets: Sequence[SubsetKey]) -> Tuple[SubsetKey, int, float]:
        allowed = {canonical_subset(s) for s in subsets}
        cands = [(k, s) for k, s in self.scores.items() if k[0] in allowed and np.isfinite(s.mean)]
        if not cands:
            return (), 0, math.nan
        (sub, lag), sc = min(cands, key=lambda ks: _rank_key(ks[0], ks[1].mean, self.variables))
        return sub, lag, sc.mean

    def best_ar(self) -> Tuple[int, float]:
        """Best lag and mean R² restricted to the target's own past."""
        _, lag, r2 = self.best_among([(self.target,)])
        return lag, r2

    def table_rows(self) -> List[Tuple[str, int, float, float, int]]:
        rows = []
        for (sub, lag), sc in sorted(self.scores.items(),
                                     key=lambda kv: (_subset_order(kv[0][0], self.variables), kv[0][1])):
            rows.append((subset_label(sub), lag, sc.mean, sc.std, sc.n_used))
        return rows

    def summary(self) -> dict:
        ar_lag, ar_r2 = self.best_ar()
        return {
            "target": self.target,
            "best_subset": list(self.best_subset),
            "best_lag": self.best_lag,
            "best_mean_r2": self.best_r2,
            "best_ar_lag": ar_lag,
            "best_ar_mean_r2": ar_r2,
            "n_batches": self.n_batches,
            "profile_mode": self.profile_mode,
            "boundary": self.boundary,
            "validation_rows": self.validation_rows,
        }


SCORE_HEADER = ("subset", "lag", "mean_r2", "std_r2", "n_batches_used")


def _fmt(x: float) -> str:
    return "" if not np.isfinite(x) else repr(float(x))


def write_scores(stream: IO[str], result: CVResult) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(SCORE_HEADER)
    for label, lag, mean, std, n in result.table_rows():
        w.writerow((label, lag, _fmt(mean), _fmt(std), n))


def read_scores(stream: IO[str], target: str, variables: Sequence[str] = VARIABLES) -> CVResult:
    reader = csv.reader(stream)
    if tuple(next(reader)) != SCORE_HEADER:
        raise ValueError(f"score CSV header must be {','.join(SCORE_HEADER)}")
    scores = {}
    for r in reader:
        if not r:
            continue
        f = lambda s: float(s) if s != "" else math.nan
        scores[(parse_subset_label(r[0]), int(r[1]))] = Score(f(r[2]), f(r[3]), int(r[4]))
    return _finalize(target, scores, 0, "train", "session", tuple(variables))


def _subset_order(subset: SubsetKey, variables: Sequence[str]) -> Tuple:
    return (len(subset), tuple(variables.index(v) if v in variables else len(variables) for v in subset))


def _rank_key(key: Tuple[SubsetKey, int], mean: float, variables: Sequence[str]):
    sub, lag = key
    # highest mean, then smallest lag, then fewest variables, then canonical order
    return (-mean, lag) + _subset_order(sub, variables)


def _finalize(target, scores, n_batches, profile_mode, boundary, variables) -> CVResult:
    finite = [(k, s) for k, s in scores.items() if np.isfinite(s.mean)]
    if finite:
        (sub, lag), sc = min(finite, key=lambda ks: _rank_key(ks[0], ks[1].mean, variables))
        best = (sub, lag, sc.mean)
    else:
        best = ((), 0, math.nan)
    return CVResult(target, scores, best[0], best[1], best[2], n_batches, profile_mode, boundary,
                    tuple(variables))


# ---------------------------------------------------------------- batch engine

def _bucket_grams(vals: Sequence[np.ndarray], target_idx: int, max_lag: int,
                  session_starts, boundary: str) -> np.ndarray:
    """Suffix-summed Gram matrices; ``out[p]`` sums rows usable at lag >= p.

    Columns: constant, then lags 1..max_lag of each variable (variable-major),
    then the target value.
    """
    shape = vals[0].shape
    pos = segment_positions(shape, session_starts, boundary)
    flats = [v.ravel() for v in vals]
    present = np.ones(pos.shape, dtype=bool)
    for f in flats:
        present &= np.isfinite(f)
    L = np.minimum(max_usable_lag(present, pos), max_lag)
    usable = np.isfinite(flats[target_idx]) & (L >= 1)
    rows = np.flatnonzero(usable)
    Lr = L[rows]
    k = len(vals)
    K = 2 + k * max_lag
    lags = np.arange(1, max_lag + 1)
    Z = np.zeros((len(rows), K))
    Z[:, 0] = 1.0
    idx = rows[:, None] - lags[None, :]
    inside = lags[None, :] <= Lr[:, None]
    safe = np.where(inside, idx, 0)
    for j, f in enumerate(flats):
        Z[:, 1 + j * max_lag: 1 + (j + 1) * max_lag] = np.where(inside, f[safe], 0.0)
    Z[:, -1] = flats[target_idx][rows]
    out = np.zeros((max_lag + 2, K, K))
    order = np.argsort(Lr, kind="stable")
    Zs, Ls = Z[order], Lr[order]
    bounds = np.searchsorted(Ls, np.arange(1, max_lag + 2))
    for p in range(max_lag, 0, -1):
        seg = Zs[bounds[p - 1]:bounds[p]]
        out[p] = out[p + 1] + seg.T @ seg
    return out


def _solve_pd(A: np.ndarray, b: np.ndarray) -> Optional[np.ndarray]:
    try:
        c = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return None
    d = np.diag(c)
    if not d.min() > 1e-7 * d.max():
        return None
    return scipy.linalg.cho_solve((c, True), b)


def _score_batch(train: Sequence[np.ndarray], valid: Sequence[np.ndarray], target_idx: int,
                 specs: Sequence[Tuple[Tuple[int, ...], int]], max_lag: int,
                 session_starts, boundary: str, common_rows: bool = True) -> List[float]:
    Gt = _bucket_grams(train, target_idx, max_lag, session_starts, boundary)
    Gv = _bucket_grams(valid, target_idx, max_lag, session_starts, boundary)
    yc = Gt.shape[1] - 1
    # common validation rows: those usable at the largest lag that has any
    top = max([p for _, p in specs if p >= 1 and Gv[p][0, 0] >= 2], default=1)
    out = []
    for sub, p in specs:
        if not sub:
            g = Gv[top if common_rows else 1]
            n = g[0, 0]
            vy = g[yc, yc] / n - (g[0, yc] / n) ** 2 if n > 0 else 0.0
            out.append(0.0 if vy > 0 else math.nan)
            continue
        cols = [0] + [1 + j * max_lag + i for j in sub for i in range(p)]
        gt, gv = Gt[p], Gv[top if common_rows else p]
        n_t, n_v = gt[0, 0], gv[0, 0]
        if n_t < len(cols) + 10 or n_v < 2:
            out.append(math.nan)
            continue
        beta = _solve_pd(gt[np.ix_(cols, cols)], gt[cols, yc])
        if beta is None:
            out.append(math.nan)
            continue
        sxx = gv[np.ix_(cols, cols)]
        sxy = gv[cols, yc]
        syy = gv[yc, yc]
        sy = gv[0, yc]
        se = sy - beta @ gv[0, cols]
        se2 = syy - 2.0 * beta @ sxy + beta @ sxx @ beta
        var_e = se2 / n_v - (se / n_v) ** 2
        var_y = syy / n_v - (sy / n_v) ** 2
        out.append(1.0 - var_e / var_y if var_y > 0 else math.nan)
    return out


def _slot_mean(x: np.ndarray) -> np.ndarray:
    """Per-slot mean over days ignoring NaN; NaN for slots with no data."""
    ok = np.isfinite(x)
    n = ok.sum(axis=0)
    total = np.where(ok, x, 0.0).sum(axis=0)
    return np.where(n > 0, total / np.maximum(n, 1), np.nan)


def _subset_specs(subsets, variables, max_lag):
    specs = []
    for sub in subsets:
        idx = tuple(variables.index(v) for v in sub)
        if not idx:
            specs.append(((), 0))
        else:
            specs.extend((idx, p) for p in range(1, max_lag + 1))
    return specs


def grid_search(
    data: Union[BinPanel, Mapping[str, PanelSeries]],
    target: str,
    max_lag: int = 40,
    subsets: Union[str, Sequence[SubsetKey]] = "all",
    scheme: Optional[BatchScheme] = None,
    n_batches: int = 20,
    train_days: int = 150,
    valid_days: int = 150,
    profile_mode: str = "train",
    boundary: str = "session",
    jobs: int = 1,
    validation_rows: str = "common",
) -> CVResult:
    """Score every (subset, lag) by mean out-of-sample R² across batches.

    ``data`` is a cleaned ``BinPanel`` (its four variables are logged) or a
    mapping of log-level ``PanelSeries``. ``profile_mode`` chooses where the
    per-slot seasonal mean is estimated: ``"train"`` (each batch's training
    days), ``"full"`` (all days) or ``"none"`` (series already stationary).
    A spec that cannot be fit on some batch is scored as missing.

    Each spec is trained on every row its own lag window allows. With
    ``validation_rows="common"`` all specs are scored on the same validation
    rows (those usable at the largest grid lag that leaves any), so score differences
    reflect the models and not which bins each lag window happens to drop;
    ``"own"`` scores each spec on its own usable rows.
    """
    if validation_rows not in ("common", "own"):
        raise ValueError(f"unknown validation_rows {validation_rows!r}")
    if isinstance(data, BinPanel):
        variables = VARIABLES
        logs = [log_values(data, v) for v in variables]
        session_starts = data.market.session_starts
    else:
        variables = canonical_subset(data.keys())
        logs = [np.where(data[v].missing, np.nan, data[v].values) for v in variables]
        session_starts = next(iter(data.values())).session_starts
    if target not in variables:
        raise ValueError(f"target {target!r} not among {variables}")
    if profile_mode not in ("train", "full", "none"):
        raise ValueError(f"unknown profile mode {profile_mode!r}")
    n_days = logs[0].shape[0]
    if scheme is None:
        scheme = make_batches(n_days, n_batches, train_days, valid_days)
    windows = list(dict.fromkeys(scheme.windows))
    if len(windows) < len(scheme.windows):
        logger.warning("%d of %d batches are duplicates for %d days; using %d distinct batches",
                       len(scheme.windows) - len(windows), len(scheme.windows), n_days, len(windows))

    if subsets == "all":
        subsets = all_subsets(variables)
    elif subsets == "ar-only":
        subsets = [(), (target,)]
    else:
        subsets = [canonical_subset(s) for s in subsets]
    specs = _subset_specs(subsets, list(variables), max_lag)
    pos = segment_positions((1, logs[0].shape[1]), session_starts, boundary)
    reach = float(np.mean(pos >= min(max_lag, pos.max())))
    if validation_rows == "common" and reach < 0.25:
        logger.warning("only %.0f%% of bins have %d complete lags under boundary=%r; common "
                       "validation rows will be few (consider a smaller max_lag or wider boundary)",
                       100 * reach, max_lag, boundary)
    t_idx = list(variables).index(target)

    full_profile = [_slot_mean(x) for x in logs] if profile_mode == "full" else None

    def run(window):
        (a, b), (c, d) = window
        if profile_mode == "train":
            prof = [_slot_mean(x[a:b]) for x in logs]
            if any(not np.all(np.isfinite(pr)) for pr in prof):
                return [math.nan] * len(specs)
        elif profile_mode == "full":
            prof = full_profile
        else:
            prof = [0.0] * len(logs)
        train = [x[a:b] - pr for x, pr in zip(logs, prof)]
        valid = [x[c:d] - pr for x, pr in zip(logs, prof)]
        return _score_batch(train, valid, t_idx, specs, max_lag, session_starts, boundary,
                            validation_rows == "common")

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            per_batch = list(ex.map(run, windows))
    else:
        per_batch = [run(w) for w in windows]

    table = np.array(per_batch).reshape(len(windows), len(specs))
    scores = {}
    for j, (idx, p) in enumerate(specs):
        col = table[:, j]
        key = (tuple(variables[i] for i in idx), p)
        if np.all(np.isfinite(col)):
            scores[key] = Score(float(np.mean(col)), float(np.std(col)), len(col))
        else:
            scores[key] = Score(math.nan, math.nan, int(np.isfinite(col).sum()))
    result = _finalize(target, scores, len(windows), profile_mode, boundary, tuple(variables))
    result.validation_rows = validation_rows
    return result
