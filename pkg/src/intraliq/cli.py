"""Command-line pipeline: bin | clean | profile | fit | granger | correlations | synth | report."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Optional, Sequence

from . import __version__
from .binning import MARKETS, SPREAD_MODES, MarketConfig, build_bins, market_config, read_bins, write_bins
from .causality import granger_grid, granger_summary, lagged_correlations, write_correlations, write_granger, write_granger_summary
from .cleaning import filter_incomplete_days, substitute_zero_volatility, write_report as write_cleaning_report
from .ingest import attach_prevailing_quote, parse_enriched_file, parse_tick_file
from .linmodels import BOUNDARIES
from .report import LAMBDA_DEFINITION, analyze_stock, read_metadata, write_report
from .selection import grid_search, write_scores
from .stationarize import deseasonalize, seasonal_profile, stationarize, write_profile, write_series
from .synth import load_spec, synthesize_panel, write_truth

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

logger = logging.getLogger("intraliq")

ZONE_MARKET = {"US": "US", "UK": "UK", "Japan": "Japan", "HongKong": "HongKong"}


def _open_out(path: str):
    if path == "-":
        return _NoClose(sys.stdout)
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


class _NoClose:
    def __init__(self, f):
        self.f = f

    def __enter__(self):
        return self.f

    def __exit__(self, *exc):
        self.f.flush()


def _market(args) -> MarketConfig:
    if getattr(args, "market_config", None):
        return MarketConfig.from_dict(args.market_config)
    return market_config(args.market)


def _load_panel(args, path: Optional[str] = None, stock_id: str = ""):
    with open(path or args.bins, "r", encoding="utf-8", newline="") as fh:
        return read_bins(fh, _market(args), args.tick_size, stock_id=stock_id, spread_mode=args.mode)


# ---------------------------------------------------------------- commands

def cmd_bin(args) -> int:
    market = _market(args)
    if args.enriched:
        enriched = parse_enriched_file(args.enriched)
        quotes = None
    else:
        if not (args.trades and args.quotes):
            raise ValueError("bin needs --enriched, or both --trades and --quotes")
        trades, _ = parse_tick_file(args.trades, "trades")
        _, quotes = parse_tick_file(args.quotes, "quotes")
        enriched = attach_prevailing_quote(trades, quotes)
        if enriched.n_dropped:
            logger.warning("dropped %d trades preceding the first quote", enriched.n_dropped)
    panel = build_bins(enriched, market, args.tick_size, mode=args.mode, quotes=quotes)
    with _open_out(args.out) as fh:
        write_bins(fh, panel)
    return 0


def cmd_clean(args) -> int:
    panel = _load_panel(args)
    exclude = []
    for item in args.exclude_dates or ():
        if os.path.exists(item):
            with open(item, encoding="utf-8") as fh:
                exclude.extend(line.strip() for line in fh if line.strip())
        else:
            exclude.extend(x for x in item.split(",") if x)
    panel, rec1 = filter_incomplete_days(panel, args.threshold, exclude)
    panel, rec2 = substitute_zero_volatility(panel, args.epsilon)
    with _open_out(args.out) as fh:
        write_bins(fh, panel)
    if args.report:
        with _open_out(args.report) as fh:
            write_cleaning_report(fh, rec1 + rec2)
    return 0


def cmd_profile(args) -> int:
    panel = _load_panel(args)
    profile = seasonal_profile(panel, args.variable)
    with _open_out(args.out) as fh:
        write_profile(fh, profile)
    if args.series_out:
        with _open_out(args.series_out) as fh:
            write_series(fh, deseasonalize(panel, args.variable, profile))
    return 0


def cmd_fit(args) -> int:
    panel = _load_panel(args)
    result = grid_search(
        panel, args.target, max_lag=args.max_lag, subsets=args.subsets,
        n_batches=args.batches, train_days=args.train_days, valid_days=args.valid_days,
        profile_mode=args.profile_mode, boundary=args.boundary, jobs=args.jobs,
        validation_rows=args.validation_rows,
    )
    with _open_out(args.out) as fh:
        write_scores(fh, result)
    summary = result.summary()
    summary["spread_mode"] = args.mode
    text = json.dumps(summary, sort_keys=True) + "\n"
    if args.summary:
        with _open_out(args.summary) as fh:
            fh.write(text)
    else:
        sys.stderr.write(text)
    return 0


def cmd_granger(args) -> int:
    panel = _load_panel(args)
    series, _ = stationarize(panel)
    results = granger_grid(series, args.max_lag, args.alpha, args.boundary, args.test_mode)
    with _open_out(args.out) as fh:
        write_granger(fh, results)
    if args.summary_out:
        with _open_out(args.summary_out) as fh:
            write_granger_summary(fh, granger_summary({panel.stock_id or "stock": results}))
    return 0


def cmd_correlations(args) -> int:
    panel = _load_panel(args)
    series, _ = stationarize(panel)
    table = lagged_correlations(series, args.max_lag, args.boundary)
    with _open_out(args.out) as fh:
        write_correlations(fh, table)
    return 0


def cmd_synth(args) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        spec = load_spec(fh.read(), seed=args.seed)
    panel = synthesize_panel(spec)
    with _open_out(args.out) as fh:
        write_bins(fh, panel)
    if args.truth:
        with _open_out(args.truth) as fh:
            write_truth(fh, spec)
    return 0


def cmd_report(args) -> int:
    with open(args.metadata, "r", encoding="utf-8", newline="") as fh:
        meta = read_metadata(fh)
    results = []
    for row in meta:
        path = os.path.join(args.bins_dir, f"{row['stock_id']}.csv")
        market = ZONE_MARKET.get(row["zone"])
        if market is None and not getattr(args, "market_config", None):
            raise ValueError(f"zone {row['zone']!r} has no preset market; pass a [market] table in --config")
        ns = argparse.Namespace(**vars(args))
        if market is not None:
            ns.market, ns.market_config = market, None
        panel = _load_panel(ns, path, stock_id=row["stock_id"])
        results.append(analyze_stock(
            panel, row["zone"], row["market_cap"], max_lag=args.max_lag,
            n_batches=args.batches, train_days=args.train_days, valid_days=args.valid_days,
            profile_mode=args.profile_mode, boundary=args.boundary, jobs=args.jobs,
            validation_rows=args.validation_rows,
        ))
    write_report(args.out_dir, results)
    with _open_out(os.path.join(args.out_dir, "report_meta.json")) as fh:
        fh.write(json.dumps({
            "spread_mode": args.mode,
            "profile_mode": args.profile_mode,
            "boundary": args.boundary,
            "validation_rows": args.validation_rows,
            "lambda_definition": LAMBDA_DEFINITION,
            "granger_null": "cause does not Granger-cause effect",
            "n_stocks": len(results),
        }, sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------- parser

TARGETS = ("volatility", "spread", "book", "turnover")


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global")
    g.add_argument("--config", help="TOML file pinning any flag (flags override it)")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--market", default="US", choices=sorted(MARKETS))
    g.add_argument("--mode", default="pre-trade", choices=SPREAD_MODES,
                   help="spread/book sampling: pre-trade average or bin-start quote")
    g.add_argument("--tick-size", type=float, default=0.01)
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("-v", "--verbose", action="store_true")


def _grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-lag", type=int, default=40)
    p.add_argument("--batches", type=int, default=20)
    p.add_argument("--train-days", type=int, default=150)
    p.add_argument("--valid-days", type=int, default=150)
    p.add_argument("--profile-mode", default="train", choices=("train", "full"))
    p.add_argument("--boundary", default="session", choices=BOUNDARIES)
    p.add_argument("--validation-rows", default="common", choices=("common", "own"),
                   help="score every spec on the same validation rows, or each on its own")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intraliq", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bin", help="tick CSVs -> bins CSV",
                       description="Trades CSV header: timestamp_ns,price,quantity. Quotes CSV header: "
                                   "timestamp_ns,bid,ask,bid_size,ask_size. Combined header: "
                                   "timestamp_ns,price,quantity,bid,ask,bid_size,ask_size.")
    _common(p)
    p.add_argument("--trades")
    p.add_argument("--quotes")
    p.add_argument("--enriched")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bin)

    p = sub.add_parser("clean", help="drop incomplete days, substitute zero volatility")
    _common(p)
    p.add_argument("--bins", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--exclude-dates", action="append",
                   help="comma-separated ISO dates or a file with one date per line")
    p.add_argument("--report", help="line-delimited JSON cleaning report")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("profile", help="seasonal profile (slot,mean_log,median,q25,q75)")
    _common(p)
    p.add_argument("--bins", required=True)
    p.add_argument("--variable", required=True, choices=TARGETS)
    p.add_argument("--out", required=True)
    p.add_argument("--series-out", help="deseasonalized series CSV (date,slot,value,missing)")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("fit", help="grid search; writes subset,lag,mean_r2,std_r2,n_batches_used")
    _common(p)
    p.add_argument("--bins", required=True)
    p.add_argument("--target", required=True, choices=TARGETS)
    p.add_argument("--subsets", default="all", choices=("all", "ar-only"))
    _grid_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--summary", help="best-spec JSON record (stderr when omitted)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("granger", help="Granger chi-squared grid (cause,effect,lag,statistic,dof,p_value,reject)")
    _common(p)
    p.add_argument("--bins", required=True)
    p.add_argument("--max-lag", type=int, default=4)
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--boundary", default="session", choices=BOUNDARIES)
    p.add_argument("--test-mode", default="joint", choices=("joint", "single"))
    p.add_argument("--out", required=True)
    p.add_argument("--summary-out", help="pair,lag,prop_rejected,n_stocks")
    p.set_defaults(func=cmd_granger)

    p = sub.add_parser("correlations", help="lagged Pearson correlations (u,v,lag,correlation)")
    _common(p)
    p.add_argument("--bins", required=True)
    p.add_argument("--max-lag", type=int, default=9)
    p.add_argument("--boundary", default="session", choices=BOUNDARIES)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_correlations)

    p = sub.add_parser("synth", help="synthetic bins CSV from a TOML spec")
    _common(p)
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="ground-truth JSON record")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="cross-sectional tables and scatter files",
                       description="Metadata CSV header: stock_id,zone,market_cap,free_float. "
                                   "Bins are read from <bins-dir>/<stock_id>.csv.")
    _common(p)
    p.add_argument("--metadata", required=True)
    p.add_argument("--bins-dir", required=True)
    p.add_argument("--out-dir", required=True)
    _grid_flags(p)
    p.set_defaults(func=cmd_report)
    return parser


def _config_defaults(path: str, command: str) -> dict:
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    out = {k.replace("-", "_"): v for k, v in cfg.items() if not isinstance(v, dict)}
    out.update({k.replace("-", "_"): v for k, v in cfg.get(command, {}).items()})
    if isinstance(cfg.get("market"), dict):
        out["market_config"] = cfg["market"]
        out.pop("market", None)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    if known.config and known.command in subparsers:
        sub = subparsers[known.command]
        try:
            defaults = _config_defaults(known.config, known.command)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            parser.error(f"cannot read config {known.config}: {exc}")
        dests = {a.dest: a for a in sub._actions}
        unknown = set(defaults) - set(dests) - {"market_config"}
        if unknown:
            sub.error(f"unknown config keys: {', '.join(sorted(unknown))}")
        for key in defaults:
            if key in dests:
                dests[key].required = False
        sub.set_defaults(**defaults)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"intraliq {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
