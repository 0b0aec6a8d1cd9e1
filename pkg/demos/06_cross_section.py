"""A small cross-section: per-stock selection, zone tables and scatters.

Three zones of four stocks each; within a zone a finer tick goes with a
weaker autoregression, which the ticks-versus-R2 scatter shows.
"""
import csv
import os
import tempfile

from intraliq.binning import market_config
from intraliq.report import analyze_stock, write_report
from intraliq.synth import ar_spec, synthesize_panel

results = []
for zone in ("US", "UK", "Japan"):
    for j in range(4):
        a = 0.8 - 0.2 * j
        spec = ar_spec(120, market_config(zone), {v: [a] for v in
                       ("volatility", "spread", "book", "turnover")}, 1.0,
                       seed=j, tick_size=0.01 / (1 + j))
        panel = synthesize_panel(spec, stock_id=f"{zone}{j}")
        results.append(analyze_stock(panel, zone, market_cap=10.0 ** (9 + j), max_lag=3,
                                     n_batches=3, train_days=40, valid_days=40))

out = tempfile.mkdtemp()
for name in write_report(out, results):
    print("wrote", name)
with open(os.path.join(out, "table2.csv"), newline="") as fh:
    for row in csv.DictReader(fh):
        if row["variable"] == "volatility":
            print(f"{row['zone']:>6} {row['model']:>3} {row['cell']}")
