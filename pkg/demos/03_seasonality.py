"""Intraday U-shape and its removal.

The synthetic panel multiplies a stationary process by a U-shaped profile;
the per-slot mean of logs recovers the profile and subtracting it leaves a
series whose slot means are zero.
"""
import numpy as np

from intraliq.binning import market_config
from intraliq.report import intraday_quantile_curves
from intraliq.stationarize import deseasonalize, reseasonalize, seasonal_profile
from intraliq.synth import ar_spec, synthesize_panel

us = market_config("US")
spec = ar_spec(300, us, {"spread": [0.6]}, 0.5, seed=3)
panel = synthesize_panel(spec)

prof = seasonal_profile(panel, "spread")
print("profile error (log):", np.abs(prof.mean_log - np.log(spec.profiles["spread"])).max().round(4))
med, q25, q75 = intraday_quantile_curves(panel, "spread")
print("median curve, open / midday / close:", med[0].round(3), med[39].round(3), med[-1].round(3))

y = deseasonalize(panel, "spread", prof)
print("largest slot mean after removal:", np.abs(y.values.mean(axis=0)).max())
back = reseasonalize(y, prof)
print("round trip max rel error:", np.abs(back / panel.variable("spread") - 1).max())
