"""Microstructure outlier removal for one instrument-day.

Two filters: rule-based quote cleaning (condition flag, zero or crossed
books, wide spreads, mid-price deviations from a local band) and
backward-forward matching of trades printed outside the prevailing
bid-offer.  Both are order-preserving subsequence selectors over
immutable inputs, so independent instrument-days can run in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .marketdata import QuoteSeries, TickSeries

__all__ = [
    "QuoteFilterConfig",
    "BfmConfig",
    "FilterStats",
    "bnhls_quote_filter",
    "bfm_trade_filter",
]


@dataclass(frozen=True)
class QuoteFilterConfig:
    """Quote-cleaning knobs: spread cap as a multiple of the daily median
    spread, and the deviation band (in mean absolute deviations) around a
    centered rolling mean of the mid."""

    spread_multiple: float = 10.0
    mad_multiple: float = 5.0
    mad_window: int = 50

    def __post_init__(self):
        if self.spread_multiple <= 0 or self.mad_multiple <= 0:
            raise ValueError("multiples must be positive")
        if self.mad_window < 3:
            raise ValueError("mad_window must be >= 3")


@dataclass(frozen=True)
class BfmConfig:
    """Matching windows for out-of-band trades: a short forward look for
    timestamp jitter and a long backward look for delayed prints."""

    forward_window_ms: int = 1_000
    backward_window_ms: int = 1_200_000

    def __post_init__(self):
        if self.forward_window_ms <= 0 or self.backward_window_ms <= 0:
            raise ValueError("windows must be positive")
        if self.forward_window_ms >= self.backward_window_ms:
            raise ValueError("forward window must be shorter than backward window")


@dataclass
class FilterStats:
    """Per instrument-day filter accounting (one output row per day).

    Invariant: removed = candidate_outliers - fwd_matched - bwd_matched.
    """

    raw_count: int = 0
    candidate_outliers: int = 0
    fwd_matched: int = 0
    fwd_mean_displacement_s: float = float("nan")
    bwd_matched: int = 0
    bwd_mean_displacement_min: float = float("nan")
    removed: int = 0
    mad_skipped: bool = False
    note: str = ""

    COLUMNS = (
        "raw_count",
        "candidate_outliers",
        "fwd_matched",
        "fwd_mean_displacement_s",
        "bwd_matched",
        "bwd_mean_displacement_min",
        "removed",
    )

    def as_row(self) -> dict:
        return {c: getattr(self, c) for c in self.COLUMNS}


def _mad_outliers(mids: np.ndarray, window: int, multiple: float) -> np.ndarray:
    """Flag mids outside `multiple` mean absolute deviations of a centered
    mean over `window` neighbors, excluding the point under test.

    Near the edges the window shifts inward so it always holds `window`
    observations.
    """
    n = mids.size
    half = window // 2
    flagged = np.zeros(n, dtype=bool)
    lo_anchor = np.clip(np.arange(n) - half, 0, n - window - 1)
    for i in range(n):
        lo = lo_anchor[i]
        block = mids[lo : lo + window + 1]
        local = np.delete(block, i - lo)
        mean = local.mean()
        mad = np.abs(local - mean).mean()
        flagged[i] = abs(mids[i] - mean) > multiple * mad
    return flagged


def bnhls_quote_filter(
    quotes: QuoteSeries,
    cfg: QuoteFilterConfig | None = None,
    condition_ok: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[QuoteSeries, FilterStats]:
    """Apply the five quote-cleaning rules to one instrument-day.

    In order: (1) drop quotes whose condition fails the user predicate
    (pass-all when no predicate is supplied), (2) drop zero bids or
    asks, (3) drop crossed books, (4) drop spreads above
    spread_multiple times the day's median spread (median taken over
    survivors of rules 1-3), (5) drop mids outside the rolling
    deviation band.  Days too short for the band rule skip it and flag
    the stats.
    """
    cfg = cfg or QuoteFilterConfig()
    n = len(quotes)
    stats = FilterStats(raw_count=n)
    keep = np.ones(n, dtype=bool)
    if condition_ok is not None and quotes.conditions is not None:
        keep &= np.asarray(condition_ok(quotes.conditions), dtype=bool)
    keep &= (quotes.bids > 0) & (quotes.asks > 0)
    keep &= quotes.asks >= quotes.bids
    spreads = quotes.spreads
    if keep.any():
        cap = cfg.spread_multiple * np.median(spreads[keep])
        keep &= spreads <= cap
    idx = np.flatnonzero(keep)
    if idx.size > cfg.mad_window:
        mids = quotes.mids[idx]
        bad = _mad_outliers(mids, cfg.mad_window, cfg.mad_multiple)
        idx = idx[~bad]
    else:
        stats.mad_skipped = True
        stats.note = "day shorter than mad_window; deviation rule skipped"
    removed = n - idx.size
    stats.candidate_outliers = removed
    stats.removed = removed
    return quotes.take(idx), stats


def bfm_trade_filter(
    trades: TickSeries,
    quotes: QuoteSeries,
    cfg: BfmConfig | None = None,
) -> tuple[TickSeries, FilterStats]:
    """Reconcile out-of-band trades against the quote history.

    A trade is a candidate outlier when its price lies strictly outside
    the prevailing [bid, ask] (last quote at or before the trade; ties
    resolve to the later quote).  Candidates are kept when some quote
    brackets the price within the forward window after the print
    (earliest such quote, covering feed jitter) or, failing that, within
    the backward window before it (nearest such quote, covering delayed
    prints).  Trades with no prevailing quote are not candidates.
    Matched trades keep their print timestamps.
    """
    cfg = cfg or BfmConfig()
    n = len(trades)
    stats = FilterStats(raw_count=n)
    if n == 0:
        return trades, stats
    if len(quotes) == 0:
        stats.note = "no quotes; out-of-band status undecidable, all trades kept"
        return trades, stats

    qts, bids, asks = quotes.timestamps, quotes.bids, quotes.asks
    prev = np.searchsorted(qts, trades.timestamps, side="right") - 1
    has_quote = prev >= 0
    px = trades.prices
    lo = np.where(has_quote, bids[np.maximum(prev, 0)], -np.inf)
    hi = np.where(has_quote, asks[np.maximum(prev, 0)], np.inf)
    candidates = np.flatnonzero(has_quote & ((px < lo) | (px > hi)))

    keep = np.ones(n, dtype=bool)
    fwd_disp: list[float] = []
    bwd_disp: list[float] = []
    for t in candidates:
        ts, p = trades.timestamps[t], trades.prices[t]
        a = np.searchsorted(qts, ts, side="left")
        b = np.searchsorted(qts, ts + cfg.forward_window_ms, side="right")
        window = np.flatnonzero((bids[a:b] <= p) & (asks[a:b] >= p))
        if window.size:
            fwd_disp.append((qts[a + window[0]] - ts) / 1_000.0)
            continue
        a = np.searchsorted(qts, ts - cfg.backward_window_ms, side="left")
        b = np.searchsorted(qts, ts, side="left")
        window = np.flatnonzero((bids[a:b] <= p) & (asks[a:b] >= p))
        if window.size:
            bwd_disp.append((ts - qts[a + window[-1]]) / 60_000.0)
            continue
        keep[t] = False

    stats.candidate_outliers = candidates.size
    stats.fwd_matched = len(fwd_disp)
    stats.bwd_matched = len(bwd_disp)
    stats.fwd_mean_displacement_s = float(np.mean(fwd_disp)) if fwd_disp else float("nan")
    stats.bwd_mean_displacement_min = float(np.mean(bwd_disp)) if bwd_disp else float("nan")
    stats.removed = int((~keep).sum())
    return trades.take(np.flatnonzero(keep)), stats
