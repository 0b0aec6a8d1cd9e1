"""Endogenous intraday liquidity dynamics: binning, stationarization, AR/VAR selection, Granger tests."""

__version__ = "0.1.0"

from .binning import MARKETS, VARIABLES, BinPanel, MarketConfig, build_bins, garman_klass, market_config
from .causality import granger_grid, granger_test, lagged_correlations
from .cleaning import filter_incomplete_days, substitute_zero_volatility
from .ingest import attach_prevailing_quote, parse_tick_file
from .linmodels import FittedModel, ModelSpec, fit_linear, predict_one_step, r2_out_of_sample
from .selection import CVResult, grid_search, make_batches
from .stationarize import PanelSeries, deseasonalize, reseasonalize, seasonal_profile
from .synth import SynthSpec, simulate_gbm_ticks, simulate_var, synthesize_panel

__all__ = [
    "attach_prevailing_quote",
    "BinPanel",
    "build_bins",
    "CVResult",
    "deseasonalize",
    "filter_incomplete_days",
    "fit_linear",
    "FittedModel",
    "garman_klass",
    "granger_grid",
    "granger_test",
    "grid_search",
    "lagged_correlations",
    "make_batches",
    "market_config",
    "MarketConfig",
    "MARKETS",
    "ModelSpec",
    "PanelSeries",
    "parse_tick_file",
    "predict_one_step",
    "r2_out_of_sample",
    "reseasonalize",
    "seasonal_profile",
    "simulate_gbm_ticks",
    "simulate_var",
    "substitute_zero_volatility",
    "synthesize_panel",
    "SynthSpec",
    "VARIABLES",
]
