import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from intraliq.linmodels import (
    FittedModel, InsufficientDataError, ModelSpec, RankDeficientError, design_matrix, fit_linear,
    max_usable_lag, predict_one_step, r2_out_of_sample, r2_score, segment_positions,
)
from intraliq.stationarize import PanelSeries


def ar_path(coefs, n, noise_sd, seed, burn=500):
    rng = np.random.default_rng(seed)
    p = len(coefs)
    x = np.zeros(n + burn)
    e = rng.normal(0, noise_sd, n + burn)
    for t in range(p, n + burn):
        x[t] = sum(c * x[t - i - 1] for i, c in enumerate(coefs)) + e[t]
    return x[burn:]


def one(name, values, **kw):
    return {name: PanelSeries.from_array(values, name, **kw)}


def test_ar1_coefficient_and_intercept():
    s = one("y", ar_path([0.6], 50_000, 0.8, seed=11))
    m = fit_linear(s, ModelSpec("y", ("y",), 1), boundary="none")
    assert m.coefficient("y", 1) == pytest.approx(0.6, abs=0.02)
    assert m.intercept == pytest.approx(0.0, abs=0.02)
    assert m.residual_variance == pytest.approx(0.64, rel=0.03)


def test_constant_series_is_rank_deficient():
    with pytest.raises(RankDeficientError) as err:
        fit_linear(one("y", np.full(200, 3.0)), ModelSpec("y", ("y",), 2), boundary="none")
    assert err.value.columns


def test_deterministic_recursion_exact():
    y = np.zeros(200)
    y[0], y[1] = 1.0, 0.5
    for t in range(2, 200):
        y[t] = 0.5 * y[t - 1] - 0.3 * y[t - 2]
    # the recursion decays; keep the informative early part
    m = fit_linear(one("y", y[:60]), ModelSpec("y", ("y",), 2), boundary="none")
    np.testing.assert_allclose(m.coefficients[0], [0.5, -0.3], atol=1e-8)


def test_too_few_rows():
    with pytest.raises(InsufficientDataError):
        fit_linear(one("y", np.random.default_rng(0).normal(size=12)), ModelSpec("y", ("y",), 2),
                   boundary="none")


def test_predict_one_step_examples():
    m = FittedModel(ModelSpec("y", ("y",), 1), 0.0, np.array([[0.6]]), 1.0, 10)
    assert predict_one_step(m, {"y": [2.0]}) == pytest.approx(1.2)
    m2 = FittedModel(ModelSpec("y", ("x", "y"), 2), 0.7, np.ones((2, 2)), 1.0, 10)
    assert predict_one_step(m2, {"x": [0, 0], "y": [0, 0]}) == 0.7


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 3))
def test_predict_matches_dot_product(seed, p, k):
    rng = np.random.default_rng(seed)
    names = ["volatility", "spread", "book"][:k]
    coef = rng.normal(size=(k, p))
    m = FittedModel(ModelSpec("spread", tuple(names), p), float(rng.normal()), coef, 1.0, 10)
    window = {v: rng.normal(size=p) for v in names}
    expect = m.intercept + sum(coef[j, i] * window[v][i] for j, v in enumerate(names) for i in range(p))
    assert predict_one_step(m, window) == pytest.approx(expect, rel=1e-12, abs=1e-12)


def test_r2_examples():
    y = np.random.default_rng(0).normal(size=100)
    assert r2_score(y, y) == 1.0
    assert r2_score(y, np.full_like(y, y.mean())) == pytest.approx(0.0, abs=1e-15)


def test_out_of_sample_r2_ar1():
    x = ar_path([0.6], 100_000, 0.8, seed=4)
    train, valid = one("y", x[:50_000]), one("y", x[50_000:])
    m = fit_linear(train, ModelSpec("y", ("y",), 1), boundary="none")
    assert r2_out_of_sample(m, valid, boundary="none") == pytest.approx(0.36, abs=0.02)


def test_segment_positions_and_usable_lags():
    pos = segment_positions((2, 6), (0, 3), "session")
    assert pos.tolist() == [0, 1, 2, 0, 1, 2] * 2
    assert segment_positions((2, 3), (0,), "day").tolist() == [0, 1, 2, 0, 1, 2]
    assert segment_positions((2, 3), (0,), "none").tolist() == list(range(6))
    present = np.array([1, 1, 1, 0, 1, 1, 1, 1], dtype=bool)
    L = max_usable_lag(present, np.arange(8))
    assert L.tolist() == [0, 1, 2, 3, 0, 1, 2, 3]


def test_rows_never_cross_boundaries_or_gaps():
    rng = np.random.default_rng(5)
    v = rng.normal(size=(5, 12))
    v[2, 4] = np.nan
    s = {"y": PanelSeries.from_array(v, "y", session_starts=(0, 6))}
    view = design_matrix(s, ModelSpec("y", ("y",), 2), boundary="session")
    flat = v.ravel()
    for r in view.rows:
        slot = r % 12
        assert slot % 6 >= 2
        assert np.all(np.isfinite(flat[r - 2:r + 1]))


def _var_panel(seed, n=4000):
    rng = np.random.default_rng(seed)
    x = ar_path([0.5], n, 1.0, seed)
    z = rng.normal(size=n)
    y = np.r_[0, 0.8 * x[:-1]] + 0.3 * z + rng.normal(size=n)
    return {
        "volatility": PanelSeries.from_array(x, "volatility", n_slots=40),
        "spread": PanelSeries.from_array(y, "spread", n_slots=40),
        "book": PanelSeries.from_array(z, "book", n_slots=40),
    }


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_residuals_orthogonal_to_regressors(seed, p):
    s = _var_panel(seed, 2000)
    spec = ModelSpec("spread", ("volatility", "spread"), p)
    m = fit_linear(s, spec)
    view = design_matrix(s, spec)
    resid = view.y - m.intercept - view.X @ m.coefficients.ravel()
    scale = np.abs(view.y).sum()
    assert abs(resid.sum()) <= 1e-8 * scale
    for j in range(view.X.shape[1]):
        assert abs(resid @ view.X[:, j]) <= 1e-8 * np.abs(view.X[:, j] * view.y).sum()
    assert m.residual_variance == pytest.approx(resid @ resid / len(resid), rel=1e-10)


def _in_sample_r2(s, spec):
    m = fit_linear(s, spec, complete=("volatility", "book"))
    view = design_matrix(s, spec, complete=("volatility", "book"))
    return 1 - m.residual_variance / np.var(view.y), len(view.rows)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_in_sample_r2_nested(seed):
    s = _var_panel(seed, 2000)
    # hide the target in the first 4 slots of each day so every model below uses the same rows
    y = s["spread"]
    hide = np.zeros(y.values.shape, dtype=bool)
    hide[:, :4] = True
    s["spread"] = PanelSeries("spread", y.days, y.values, y.missing | hide, y.session_starts)
    fits = {(sub, p): _in_sample_r2(s, ModelSpec("spread", sub, p))
            for sub in (("volatility",), ("volatility", "book")) for p in range(1, 5)}
    assert len({n for _, n in fits.values()}) == 1
    for sub in (("volatility",), ("volatility", "book")):
        r2 = [fits[(sub, p)][0] for p in range(1, 5)]
        assert all(b >= a - 1e-12 for a, b in zip(r2, r2[1:]))
    for p in range(1, 5):
        assert fits[(("volatility", "book"), p)][0] >= fits[(("volatility",), p)][0] - 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50))
def test_constant_shift_only_moves_intercept(seed, c):
    s = _var_panel(seed, 2000)
    spec = ModelSpec("spread", ("volatility", "spread"), 2)
    m = fit_linear(s, spec)
    train = {k: v.select_days(slice(0, 25)) for k, v in s.items()}
    valid = {k: v.select_days(slice(25, 50)) for k, v in s.items()}
    shifted = dict(s)
    shifted["spread"] = PanelSeries("spread", s["spread"].days, s["spread"].values + c,
                                    s["spread"].missing, s["spread"].session_starts)
    m2 = fit_linear(shifted, spec)
    # the target's own lags shift too, so the intercept absorbs c * (1 - sum of own coefficients)
    np.testing.assert_allclose(m2.coefficients, m.coefficients, atol=1e-10)
    assert m2.residual_variance == pytest.approx(m.residual_variance, rel=1e-10)
    mt = fit_linear(train, spec)
    tr2 = dict(train, spread=PanelSeries("spread", train["spread"].days, train["spread"].values + c,
                                         train["spread"].missing, train["spread"].session_starts))
    va2 = dict(valid, spread=PanelSeries("spread", valid["spread"].days, valid["spread"].values + c,
                                         valid["spread"].missing, valid["spread"].session_starts))
    assert r2_out_of_sample(fit_linear(tr2, spec), va2) == pytest.approx(
        r2_out_of_sample(mt, valid), abs=1e-10)


def test_coefficients_converge_on_known_var():
    s = _var_panel(3, 40_000)
    m = fit_linear(s, ModelSpec("spread", ("volatility", "spread", "book"), 1))
    bound = 5 / np.sqrt(m.n_obs)
    assert abs(m.coefficient("volatility", 1) - 0.8) < bound
    assert abs(m.coefficient("spread", 1)) < bound
    assert abs(m.coefficient("book", 1)) < bound


def test_record_round_trip():
    s = _var_panel(1, 2000)
    m = fit_linear(s, ModelSpec("spread", ("spread", "volatility"), 3))
    back = FittedModel.from_record(json.loads(m.to_json()))
    assert back.spec == m.spec
    np.testing.assert_array_equal(back.coefficients, m.coefficients)
    assert m.spec.subset == ("volatility", "spread")
