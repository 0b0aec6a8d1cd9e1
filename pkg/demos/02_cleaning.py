"""The two cleaning rules on a panel with gaps and flat bins.

Days with fewer than 80% non-empty bins go; zero volatilities in traded bins
are replaced by the day's smallest positive value (or the previous day's).
"""
import io

from intraliq.binning import market_config
from intraliq.cleaning import filter_incomplete_days, substitute_zero_volatility, write_report
from intraliq.synth import ar_spec, synthesize_panel

us = market_config("US")
panel = synthesize_panel(ar_spec(5, us, {"volatility": [0.5]}, 1.0, seed=2))

# knock out most of day 1 and flatten a few bins of day 2
panel.data["n_trades"][1, :20] = 0
panel.data["volatility"][2, [3, 10, 40]] = 0.0

panel, removed = filter_incomplete_days(panel)
panel, substituted = substitute_zero_volatility(panel)
out = io.StringIO()
write_report(out, removed + substituted)
print(out.getvalue(), end="")
print(f"{panel.n_days} days kept")
