import datetime as dt
import io
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from intraliq.binning import FIELD_OF, MarketConfig
from intraliq.linmodels import ModelSpec, design_matrix, fit_linear, predict, r2_out_of_sample, r2_score
from intraliq.selection import (
    all_subsets, grid_search, make_batches, parse_subset_label, read_scores, subset_label,
    write_scores,
)
from intraliq.stationarize import stationarize
from intraliq.synth import SynthSpec, ar_spec, default_profiles, synthesize_panel

VARS = ("volatility", "spread", "book", "turnover")
# one 20-bin session per day
SMALL = MarketConfig(dt.time(10, 0), dt.time(11, 40), zone="small", tz="UTC")


def small_panel(coefs, n_days=60, seed=0, market=SMALL):
    return synthesize_panel(ar_spec(n_days, market, coefs, 1.0, seed=seed))


def test_no_slack_batches_identical():
    s = make_batches(300)
    assert len(s.windows) == 20
    assert set(s.windows) == {((0, 150), (150, 300))}


def test_320_days_starts():
    starts = [w[0][0] for w in make_batches(320).windows]
    assert starts == [int(np.floor(i * 20 / 19 + 0.5)) for i in range(20)]
    assert starts[0] == 0 and starts[-1] == 20 and len(set(starts)) == 20


def test_1241_days_spacing():
    s = make_batches(1241)
    starts = [w[0][0] for w in s.windows]
    assert np.mean(np.diff(starts)) == pytest.approx(941 / 19)
    assert s.windows[-1][1][1] == 1241
    for (a, b), (c, d) in s.windows:
        assert b == c and b - a == 150 and d - c == 150


def test_batches_errors_and_single():
    with pytest.raises(ValueError):
        make_batches(299)
    assert make_batches(500, n_batches=1).windows == [((0, 150), (150, 300))]


def test_sixteen_subsets_and_labels():
    subs = all_subsets()
    assert len(subs) == 16 and subs[0] == ()
    for s in subs:
        assert parse_subset_label(subset_label(s)) == s


def _manual_batch_r2(panel, target, sub, p, window, common_lag=None):
    """Slow path: train-window profile, fit_linear, then R² on the validation rows."""
    (a, b), (c, d) = window
    series, _ = stationarize(panel, VARS, days=slice(a, b))
    train = {k: v.select_days(slice(a, b)) for k, v in series.items()}
    valid = {k: v.select_days(slice(c, d)) for k, v in series.items()}
    m = fit_linear(train, ModelSpec(target, sub, p), complete=VARS)
    if common_lag is None:
        return r2_out_of_sample(m, valid, complete=VARS)
    view = design_matrix(valid, ModelSpec(target, sub, p), complete=VARS)
    common = design_matrix(valid, ModelSpec(target, VARS, common_lag), complete=VARS).rows
    keep = np.isin(view.rows, common)
    assert keep.sum() == len(common)
    return r2_score(view.y[keep], predict(m, view)[keep])


@pytest.mark.parametrize("rows", ["own", "common"])
def test_fast_path_matches_slow_path(rows):
    panel = small_panel({"spread": [0.5, 0.2], "volatility": [0.3]}, n_days=40, seed=3)
    # knock out some bins so lag windows have gaps
    rng = np.random.default_rng(0)
    holes = rng.random(panel.data["n_trades"].shape) < 0.03
    panel.data["n_trades"][holes] = 0
    max_lag = 4
    res = grid_search(panel, "spread", max_lag=max_lag, n_batches=3, train_days=15, valid_days=10,
                      validation_rows=rows)
    scheme = make_batches(40, 3, 15, 10)
    for sub in [("spread",), ("volatility", "spread"), ("book",), VARS]:
        for p in (1, 2, 4):
            per = [_manual_batch_r2(panel, "spread", sub, p, w,
                                    common_lag=max_lag if rows == "common" else None)
                   for w in scheme.windows]
            sc = res.scores[(sub, p)]
            assert sc.mean == pytest.approx(np.mean(per), abs=1e-9)
            assert sc.std == pytest.approx(np.std(per), abs=1e-9)
            assert sc.n_used == 3


def test_empty_subset_scores_zero_and_is_floor():
    panel = small_panel({"book": [0.4]}, n_days=40)
    res = grid_search(panel, "book", max_lag=3, n_batches=2, train_days=15, valid_days=10)
    assert res.scores[((), 0)].mean == 0.0
    assert res.best_r2 >= res.scores[((), 0)].mean


def test_white_noise_target():
    panel = small_panel({}, n_days=120, seed=2)
    res = grid_search(panel, "turnover", max_lag=5, n_batches=4, train_days=50, valid_days=50)
    assert res.best_r2 <= 0.02


def test_tie_break_prefers_smaller_lag_and_subset():
    from intraliq.selection import Score, _finalize
    scores = {
        (("volatility", "spread"), 2): Score(0.5, 0, 1),
        (("spread",), 2): Score(0.5, 0, 1),
        (("book",), 2): Score(0.5, 0, 1),
        (("spread",), 3): Score(0.5, 0, 1),
        (("spread",), 1): Score(0.4, 0, 1),
    }
    r = _finalize("spread", scores, 1, "train", "session", VARS)
    assert (r.best_subset, r.best_lag) == (("spread",), 2)


def test_recovers_ar2_target_only():
    from intraliq.binning import market_config
    us = market_config("US")
    hits = 0
    for seed in range(5):
        panel = synthesize_panel(ar_spec(1000, us, {"volatility": [0.5, 0.25]}, 1.0, seed=seed))
        res = grid_search(panel, "volatility", max_lag=8, n_batches=10)
        hits += (res.best_subset, res.best_lag) == (("volatility",), 2)
    assert hits >= 4


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 1000), st.sampled_from(VARS), st.floats(1e-3, 1e3))
def test_scale_invariance(seed, var, k):
    panel = small_panel({"spread": [0.5]}, n_days=30, seed=seed)
    base = grid_search(panel, "spread", max_lag=3, n_batches=2, train_days=10, valid_days=10)
    scaled = panel.copy()
    f = FIELD_OF[var]
    scaled.data[f] = scaled.data[f] * k
    other = grid_search(scaled, "spread", max_lag=3, n_batches=2, train_days=10, valid_days=10)
    assert (other.best_subset, other.best_lag) == (base.best_subset, base.best_lag)
    for key, sc in base.scores.items():
        assert other.scores[key].mean == pytest.approx(sc.mean, abs=1e-9)


def test_deterministic_and_jobs_independent():
    panel = small_panel({"spread": [0.5], "book": [0.3]}, n_days=40)
    outs = []
    for jobs in (1, 1, 3):
        buf = io.StringIO()
        write_scores(buf, grid_search(panel, "spread", max_lag=4, n_batches=4, train_days=15,
                                      valid_days=10, jobs=jobs))
        outs.append(buf.getvalue())
    assert outs[0] == outs[1] == outs[2]
    back = read_scores(io.StringIO(outs[0]), "spread")
    again = io.StringIO()
    write_scores(again, back)
    assert again.getvalue() == outs[0]


def test_duplicate_batches_warn(caplog):
    panel = small_panel({"spread": [0.5]}, n_days=30)
    with caplog.at_level(logging.WARNING):
        res = grid_search(panel, "spread", max_lag=2, n_batches=20, train_days=15, valid_days=15)
    assert res.n_batches == 1 and "duplicates" in caplog.text


def test_unfittable_specs_are_missing():
    # 4-bin sessions cannot host lag 5 under the session boundary
    tiny = MarketConfig(dt.time(9, 0), dt.time(9, 40), (dt.time(9, 20), dt.time(9, 30)),
                        zone="t", tz="UTC")
    panel = synthesize_panel(ar_spec(30, tiny, {"spread": [0.5]}, 1.0, seed=1))
    res = grid_search(panel, "spread", max_lag=5, n_batches=2, train_days=10, valid_days=10)
    assert np.isnan(res.scores[(("spread",), 5)].mean)
    assert res.best_lag <= 3


def test_mapping_input_matches_panel_input():
    panel = small_panel({"spread": [0.5]}, n_days=30)
    from intraliq.stationarize import log_values, PanelSeries
    series = {v: PanelSeries(v, panel.days, log_values(panel, v), panel.empty, (0,)) for v in VARS}
    a = grid_search(panel, "spread", max_lag=2, n_batches=2, train_days=10, valid_days=10)
    b = grid_search(series, "spread", max_lag=2, n_batches=2, train_days=10, valid_days=10)
    for key, sc in a.scores.items():
        assert b.scores[key].mean == pytest.approx(sc.mean, abs=1e-12)


def test_var_spec_with_full_covariance():
    S = SMALL.bins_per_day
    A = np.zeros((1, 4, 4))
    A[0, 1, 0] = 0.8
    A[0, 0, 0] = 0.5
    spec = SynthSpec(n_days=200, market=SMALL, coefficients=A, innovation_cov=np.eye(4),
                     profiles=default_profiles(S), variables=VARS, seed=1)
    res = grid_search(synthesize_panel(spec), "spread", max_lag=3, n_batches=3, train_days=60,
                      valid_days=60)
    assert "volatility" in res.best_subset
