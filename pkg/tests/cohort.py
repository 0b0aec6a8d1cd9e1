"""Small synthetic multi-zone cohort for report tests."""
from intraliq.binning import market_config
from intraliq.synth import ar_spec, synthesize_panel

ZONES = ("US", "UK", "Japan")
GRID = dict(max_lag=3, n_batches=3, train_days=40, valid_days=40)


def cohort_panels(n_per_zone=4, n_days=100, seed=0):
    """``n_per_zone`` stocks per zone; within a zone, AR strength falls as spread in ticks rises."""
    out = []
    for zi, zone in enumerate(ZONES):
        m = market_config(zone)
        for j in range(n_per_zone):
            a = 0.8 - 0.2 * j
            coefs = {v: [a] for v in ("volatility", "spread", "book", "turnover")}
            # a finer tick makes the same spread more ticks wide
            tick = 0.01 / (1 + j)
            spec = ar_spec(n_days, m, coefs, 1.0, seed=seed + 10 * zi + j, tick_size=tick)
            sid = f"{zone[:2].upper()}{j}"
            cap = float(10 ** (9 + j + 0.1 * zi))
            out.append((sid, zone, cap, synthesize_panel(spec, stock_id=sid)))
    return out


def write_cohort(dir_path, n_per_zone=4, n_days=100, seed=0):
    from intraliq.binning import write_bins
    rows = ["stock_id,zone,market_cap,free_float"]
    bins_dir = dir_path / "bins"
    bins_dir.mkdir(parents=True, exist_ok=True)
    for sid, zone, cap, panel in cohort_panels(n_per_zone, n_days, seed):
        with open(bins_dir / f"{sid}.csv", "w", newline="") as fh:
            write_bins(fh, panel)
        rows.append(f"{sid},{zone},{cap!r},0.5")
    (dir_path / "meta.csv").write_text("\n".join(rows) + "\n")
    return dir_path / "meta.csv", bins_dir
