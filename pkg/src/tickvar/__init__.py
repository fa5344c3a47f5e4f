"""tickvar: noise-robust measurement of the jump component of asset-price
variation from ultra high-frequency tick data.

Subpackages: marketdata (ingestion), cleaning (quote/trade filters),
preavg (variation measures), asymptotics (weight calculus and limit
theory), jumpdetect (jump location tests, maxgap), simlab (synthetic
paths), harness (Monte Carlo drivers), cli (command-line front end).
"""

from .asymptotics import SigmaStar, WeightConstants, WeightFunction, bv_bias, sigma_star, w_g, weight_constants
from .cleaning import BfmConfig, FilterStats, QuoteFilterConfig, bfm_trade_filter, bnhls_quote_filter
from .jumpdetect import JumpEvent, LmConfig, MaxgapConfig, lm_scan, lm_statistic, lm_threshold, maxgap, preavg_lm_scan
from .marketdata import (
    QuoteSeries,
    SchemaSpec,
    SessionWindow,
    TickSeries,
    aggregate_by_millisecond,
    clip_session,
    mid_quote,
    parse_ticks,
)
from .preavg import (
    PreAvgConfig,
    VariationReport,
    bipower_variation,
    jump_variation,
    log_returns,
    noise_ratio,
    noise_variance_ac,
    preavg_bv,
    preavg_returns,
    preavg_rv,
    realized_variance,
    threshold_tau,
    truncated_preavg_bv,
    variation_report,
)
from .simlab import GridSpec, NoiseSpec, SimPath, SimSpec, add_noise, round_to_grid, simulate, simulate_many

__version__ = "0.1.0"
