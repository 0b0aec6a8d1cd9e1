"""AR / VAR estimation by least squares, one-step prediction and out-of-sample R²."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .binning import VARIABLES
from .stationarize import PanelSeries

BOUNDARIES = ("session", "day", "none")


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, columns: Sequence[str]):
        self.columns = list(columns)
        super().__init__(f"rank-deficient design; collinear columns: {', '.join(self.columns)}")


class InsufficientDataError(ValueError):
    pass


def _order_key(v: str) -> Tuple[int, str]:
    return (VARIABLES.index(v), v) if v in VARIABLES else (len(VARIABLES), v)


def canonical_subset(subset) -> Tuple[str, ...]:
    return tuple(sorted(set(subset), key=_order_key))


@dataclass(frozen=True)
class ModelSpec:
    """Target variable, explanatory subset and lag; the empty subset is the seasonal-mean baseline."""

    target: str
    subset: Tuple[str, ...]
    lag: int

    def __post_init__(self):
        object.__setattr__(self, "subset", canonical_subset(self.subset))
        if self.subset and self.lag < 1:
            raise ValueError("lag must be >= 1 for a non-empty explanatory set")
        if not self.subset:
            object.__setattr__(self, "lag", 0)

    @property
    def n_coefficients(self) -> int:
        return len(self.subset) * self.lag

    def column_names(self) -> List[str]:
        return [f"{v}[lag {i}]" for v in self.subset for i in range(1, self.lag + 1)]


@dataclass
class FittedModel:
    spec: ModelSpec
    intercept: float
    coefficients: np.ndarray  # shape (len(subset), lag); row per variable, column per lag
    residual_variance: float
    n_obs: int

    def coefficient(self, variable: str, lag: int) -> float:
        return float(self.coefficients[self.spec.subset.index(variable), lag - 1])

    def to_record(self) -> dict:
        return {
            "target": self.spec.target,
            "subset": list(self.spec.subset),
            "lag": self.spec.lag,
            "intercept": self.intercept,
            "coefficients": [
                {"variable": v, "lag": i + 1, "value": float(self.coefficients[j, i])}
                for j, v in enumerate(self.spec.subset) for i in range(self.spec.lag)
            ],
            "residual_variance": self.residual_variance,
            "n_obs": self.n_obs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)

    @classmethod
    def from_record(cls, rec: Mapping) -> "FittedModel":
        spec = ModelSpec(rec["target"], tuple(rec["subset"]), int(rec["lag"]))
        coef = np.zeros((len(spec.subset), spec.lag))
        for c in rec["coefficients"]:
            coef[spec.subset.index(c["variable"]), c["lag"] - 1] = c["value"]
        return cls(spec, float(rec["intercept"]), coef, float(rec["residual_variance"]),
                   int(rec["n_obs"]))


# ---------------------------------------------------------------- row geometry

def segment_positions(shape: Tuple[int, int], session_starts: Sequence[int],
                      boundary: str = "session") -> np.ndarray:
    """Index of every flattened bin within its lag segment.

    ``session`` restarts at each day and each session start (lunch break),
    ``day`` at each day, ``none`` never (days are treated as contiguous).
    """
    n_days, n_slots = shape
    slots = np.arange(n_slots)
    if boundary == "session":
        starts = np.asarray(sorted(session_starts))
        per_slot = slots - starts[np.searchsorted(starts, slots, side="right") - 1]
        return np.tile(per_slot, n_days)
    if boundary == "day":
        return np.tile(slots, n_days)
    if boundary == "none":
        return np.arange(n_days * n_slots)
    raise ValueError(f"unknown boundary {boundary!r}; use one of {BOUNDARIES}")


def run_lengths(ok: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Length of the run of ``ok`` values ending at each index, not crossing a segment start."""
    n = len(ok)
    idx = np.arange(n)
    marker = np.where(~ok, idx, -1)
    marker = np.maximum(marker, np.where(pos == 0, idx - 1, -1))
    return idx - np.maximum.accumulate(marker)


def max_usable_lag(present: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Largest p such that the p bins before t are present and in t's segment."""
    run = run_lengths(present, pos)
    prev = np.r_[0, run[:-1]]
    return np.minimum(pos, prev)


def _check_aligned(series: Mapping[str, PanelSeries]) -> Tuple[Tuple[int, int], Tuple[int, ...]]:
    items = list(series.values())
    shape = items[0].values.shape
    for s in items[1:]:
        if s.values.shape != shape or not np.array_equal(s.days, items[0].days):
            raise ValueError("series are not aligned on the same (day, slot) grid")
    return shape, items[0].session_starts


@dataclass
class DesignMatrixView:
    rows: np.ndarray  # flattened (day * S + slot) indices of usable targets
    X: np.ndarray  # lagged regressors, columns ordered (variable, lag)
    y: np.ndarray
    columns: List[str]


def design_matrix(series: Mapping[str, PanelSeries], spec: ModelSpec, boundary: str = "session",
                  complete: Optional[Sequence[str]] = None) -> DesignMatrixView:
    """Rows t whose target is present and whose lag windows are complete.

    ``complete`` names the variables whose p previous bins must all be
    present; it defaults to the explanatory subset.
    """
    shape, starts = _check_aligned(series)
    pos = segment_positions(shape, starts, boundary)
    complete = spec.subset if complete is None else tuple(complete)
    present = np.ones(pos.shape, dtype=bool)
    for v in complete:
        present &= ~series[v].missing.ravel()
    target_ok = ~series[spec.target].missing.ravel()
    L = max_usable_lag(present, pos)
    rows = np.flatnonzero(target_ok & (L >= spec.lag))
    cols = []
    for v in spec.subset:
        flat = series[v].values.ravel()
        for i in range(1, spec.lag + 1):
            cols.append(flat[rows - i])
    X = np.column_stack(cols) if cols else np.empty((len(rows), 0))
    y = series[spec.target].values.ravel()[rows]
    return DesignMatrixView(rows, X, y, spec.column_names())


# ---------------------------------------------------------------- estimation

def least_squares(X: np.ndarray, y: np.ndarray, names: Sequence[str],
                  rtol: float = 1e-10) -> Tuple[np.ndarray, np.ndarray, int]:
    """OLS via pivoted QR.

    Returns ``(beta, residuals, rank)``. Columns beyond the numerical rank
    get a zero coefficient; callers decide whether that is an error.
    """
    n, k = X.shape
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * diag[0])) if k and diag[0] > 0 else 0
    beta = np.zeros(k)
    if rank:
        z = Q[:, :rank].T @ y
        beta[piv[:rank]] = scipy.linalg.solve_triangular(R[:rank, :rank], z)
    resid = y - X @ beta
    return beta, resid, rank


def _dropped_columns(X: np.ndarray, names: Sequence[str], rtol: float = 1e-10) -> List[str]:
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * diag[0])) if diag.size and diag[0] > 0 else 0
    return [names[j] for j in piv[rank:]]


def fit_linear(series: Mapping[str, PanelSeries], spec: ModelSpec, boundary: str = "session",
               complete: Optional[Sequence[str]] = None) -> FittedModel:
    """Least-squares fit of the target equation with an intercept.

    For Gaussian innovations this is the conditional maximum-likelihood
    estimate; the residual variance uses the ML divisor ``n_obs``.

    Raises
    ------
    InsufficientDataError
        Fewer than ``k + 11`` usable rows for ``k`` lag coefficients.
    RankDeficientError
        The design (intercept included) is not of full column rank.
    """
    view = design_matrix(series, spec, boundary, complete)
    n = len(view.y)
    k = spec.n_coefficients
    if n < k + 1 + 10:
        raise InsufficientDataError(f"{n} usable rows; need at least {k + 11} for {spec}")
    X1 = np.column_stack([np.ones(n), view.X])
    names = ["intercept"] + view.columns
    beta, resid, rank = least_squares(X1, view.y, names)
    if rank < X1.shape[1]:
        raise RankDeficientError(_dropped_columns(X1, names))
    coef = beta[1:].reshape(len(spec.subset), spec.lag) if k else np.zeros((0, 0))
    return FittedModel(spec, float(beta[0]), coef, float(resid @ resid / n), n)


def predict_one_step(model: FittedModel, window: Mapping[str, Sequence[float]]) -> float:
    """Intercept plus the lagged dot product.

    ``window[v]`` lists the most recent values of ``v``, newest first
    (``window[v][0]`` is lag 1).
    """
    out = model.intercept
    p = model.spec.lag
    for j, v in enumerate(model.spec.subset):
        w = np.asarray(window.get(v, ()), dtype=float)
        if w.shape[0] < p or not np.all(np.isfinite(w[:p])):
            raise ValueError(f"window for {v} needs {p} finite values")
        out += float(model.coefficients[j] @ w[:p])
    return out


def predict(model: FittedModel, view: DesignMatrixView) -> np.ndarray:
    return model.intercept + view.X @ model.coefficients.ravel()


def r2_score(y: np.ndarray, pred: np.ndarray) -> float:
    """``1 - Var(y - pred) / Var(y)`` with population variances; NaN if Var(y) is 0."""
    vy = np.var(y)
    if not vy > 0:
        return math.nan
    return float(1.0 - np.var(y - pred) / vy)


def r2_out_of_sample(model: FittedModel, validation: Mapping[str, PanelSeries],
                     boundary: str = "session", complete: Optional[Sequence[str]] = None) -> float:
    """Out-of-sample R² of a fitted model on validation series (rows built as in training)."""
    view = design_matrix(validation, model.spec, boundary, complete)
    if len(view.y) == 0:
        return math.nan
    return r2_score(view.y, predict(model, view))
