"""Granger tests and lagged correlations on a one-way coupled pair.

Turnover drives the spread one bin later; the reverse direction is absent.
"""
import numpy as np

from intraliq.binning import market_config
from intraliq.causality import granger_grid, lagged_correlations
from intraliq.stationarize import stationarize
from intraliq.synth import SynthSpec, synthesize_panel

us = market_config("US")
A = np.zeros((1, 4, 4))
A[0, 1, 3] = 0.3  # spread <- turnover
A[0, 3, 3] = 0.5
panel = synthesize_panel(SynthSpec(200, us, A, np.eye(4), seed=5))
series, _ = stationarize(panel)

for r in granger_grid(series, max_lag=2):
    if {r.cause, r.effect} == {"spread", "turnover"}:
        print(f"{r.cause:>9} -> {r.effect:<9} lag {r.lag}: chi2={r.statistic:9.2f} "
              f"p={r.p_value:.2e} reject={r.reject}")

table = lagged_correlations(series, max_lag=3)
print("corr(spread_t, turnover_{t-k}):", [round(table.get("spread", "turnover", k), 3) for k in range(4)])
