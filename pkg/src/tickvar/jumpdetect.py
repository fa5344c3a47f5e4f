"""Jump location tests on coarse-grid returns and on pre-averaged tick
returns, plus the maxgap measure of tick-level price discontinuity.

The detection statistic compares each return to a local jump-robust
volatility estimate; the day-level threshold comes from the extreme
value approximation for the maximum of absolute standard normals.  On
tick data the statistic runs on the non-overlapping sequence of
pre-averaged returns, which is asymptotically i.i.d. standard normal
under the no-jump null.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .marketdata import TickSeries
from .preavg import (
    BIPOWER_FACTOR,
    PreAvgConfig,
    log_returns,
    preavg_returns,
    preavg_rv,
    realized_variance,
)

__all__ = [
    "LmConfig",
    "MaxgapConfig",
    "JumpEvent",
    "ScanResult",
    "default_block_length",
    "lm_statistic",
    "lm_statistics",
    "lm_threshold",
    "lm_scan",
    "preavg_lm_scan",
    "tick_gaps",
    "maxgap",
]


def default_block_length(n_per_day: int) -> int:
    """Volatility-window length for a given per-day return count."""
    return math.ceil(math.sqrt(252.0 * n_per_day))


@dataclass(frozen=True)
class LmConfig:
    """Local jump-test settings.

    block    window length (in returns) of the local volatility estimate;
             None derives it from the per-day return count.
    significance  day-level test size in (0, 1).
    """

    block: int | None = None
    significance: float = 0.01

    def __post_init__(self):
        if self.block is not None and self.block < 3:
            raise ValueError("block must be >= 3")
        if not 0 < self.significance < 1:
            raise ValueError("significance must lie in (0, 1)")

    def resolve_block(self, n_per_day: int) -> int:
        return self.block if self.block is not None else default_block_length(n_per_day)


@dataclass(frozen=True)
class MaxgapConfig:
    """Buffer size (observations per side) for the gap windows."""

    delta: int = 5

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")


@dataclass(frozen=True)
class JumpEvent:
    """A detected jump: where, how large, and how discontinuous the tick
    path actually is over the same window (when attached)."""

    interval_index: int
    timestamp: int
    statistic: float
    size: float
    maxgap: float | None = None


@dataclass(frozen=True)
class ScanResult:
    events: tuple[JumpEvent, ...]
    implied_jv: float
    threshold: float
    n_statistics: int

    @property
    def jump_count(self) -> int:
        return len(self.events)

    @property
    def mean_abs_size(self) -> float:
        if not self.events:
            return 0.0
        return float(np.mean([abs(e.size) for e in self.events]))

    @property
    def max_abs_size(self) -> float:
        if not self.events:
            return 0.0
        return float(max(abs(e.size) for e in self.events))


def lm_statistics(r: np.ndarray, block: int) -> np.ndarray:
    """Ratio of each return to its local volatility estimate.

    The estimate is the bipower mean of the block-2 preceding absolute
    return products, so it is robust to a jump at the tested position.
    Entries without enough history, or with a flat (zero) window, are
    NaN rather than infinite.
    """
    r = np.asarray(r, dtype=float)
    if block < 3:
        raise ValueError("block must be >= 3")
    n = r.size
    out = np.full(n, np.nan)
    if n < block:
        return out
    prods = np.abs(r[1:]) * np.abs(r[:-1])
    csum = np.concatenate([[0.0], np.cumsum(prods)])
    # statistic at t uses products indexed t-block+2 .. t-1 (count block-2)
    t = np.arange(block - 1, n)
    s2 = BIPOWER_FACTOR * (csum[t - 1] - csum[t - block + 1]) / (block - 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = r[t] / np.sqrt(s2)
    vals[s2 <= 0] = np.nan
    out[t] = vals
    return out


def lm_statistic(r: np.ndarray, cfg: LmConfig, i: int) -> float:
    """Single-position statistic; i indexes the return vector (0-based)
    and needs at least block-1 prior returns."""
    r = np.asarray(r, dtype=float)
    block = cfg.resolve_block(r.size)
    if i < block - 1:
        raise ValueError(f"index {i} has insufficient history for block {block}")
    return float(lm_statistics(r, block)[i])


def lm_threshold(n: int, significance: float) -> float:
    """Absolute detection threshold for the day maximum of n statistics.

    Uses the Gumbel location/scale for the maximum of n absolute
    standard normals: reject when (|L| - C_n) / S_n exceeds the Gumbel
    quantile -log(-log(1 - significance)).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    a = math.sqrt(2.0 * math.log(n))
    c_n = a - (math.log(math.pi) + math.log(math.log(n))) / (2.0 * a)
    s_n = 1.0 / a
    with np.errstate(divide="ignore"):
        quantile = -np.log(-np.log1p(-significance))
    return float(c_n + s_n * quantile)


def _grid_sample(series: TickSeries, grid_ms: int) -> tuple[np.ndarray, np.ndarray]:
    """Previous-tick log prices at grid boundaries k * grid_ms."""
    ts = series.timestamps
    n_bins = int(ts[-1] // grid_ms)
    bounds = np.arange(0, n_bins + 1) * grid_ms
    pos = np.searchsorted(ts, bounds, side="right") - 1
    valid = pos >= 0
    return series.log_prices[pos[valid]], bounds[valid]


def _scan_returns(
    r: np.ndarray,
    stamps: np.ndarray,
    cfg: LmConfig,
    n_per_day: int,
    total_variation: float,
) -> ScanResult:
    block = cfg.resolve_block(n_per_day)
    stats = lm_statistics(r, block)
    c = lm_threshold(max(n_per_day, 2), cfg.significance)
    hits = np.flatnonzero(np.abs(stats) > c)
    events = tuple(
        JumpEvent(
            interval_index=int(t),
            timestamp=int(stamps[t]),
            statistic=float(stats[t]),
            size=float(r[t]),
        )
        for t in hits
    )
    jv = float(sum(e.size**2 for e in events) / total_variation) if total_variation > 0 else 0.0
    return ScanResult(events=events, implied_jv=jv, threshold=c, n_statistics=int(np.isfinite(stats).sum()))


def lm_scan(series: TickSeries, grid_ms: int, cfg: LmConfig | None = None, session_span_ms: int | None = None) -> ScanResult:
    """Scan coarse-grid returns for jumps.

    The series may span several sessions; the volatility window then
    rolls across day boundaries.  The threshold is calibrated to the
    per-day statistic count (session_span_ms / grid_ms when the session
    span is given, the full scan length otherwise).  Implied jump
    variation is the summed squared jump sizes over the grid realized
    variance.
    """
    cfg = cfg or LmConfig()
    if len(series) < 2:
        raise ValueError("need at least two ticks")
    span = series.timestamps[-1] - series.timestamps[0]
    if grid_ms <= 0 or grid_ms > span:
        raise ValueError("grid must be positive and finer than the series span")
    prices, bounds = _grid_sample(series, grid_ms)
    if prices.size < 2:
        raise ValueError("grid too coarse: fewer than two sampled prices")
    r = np.diff(prices)
    n_day = int(session_span_ms // grid_ms) if session_span_ms else r.size
    block = cfg.resolve_block(n_day)
    if r.size < block:
        raise ValueError(f"series spans {r.size} grid returns < block {block}")
    return _scan_returns(r, bounds[1:], cfg, n_day, realized_variance(r))


def preavg_lm_scan(
    series: TickSeries,
    pcfg: PreAvgConfig | None = None,
    cfg: LmConfig | None = None,
    n_per_day: int | None = None,
) -> ScanResult:
    """Scan tick data for jumps on the non-overlapping pre-averaged grid.

    Pre-averaged returns are taken every K ticks (adjacent disjoint
    windows), which under the no-jump null form an asymptotically
    i.i.d. standard normal sequence once studentized.  Event timestamps
    mark the end of the breaching window; sizes are the pre-averaged
    returns, and implied jump variation is relative to the noise-robust
    realized variance of the series.
    """
    pcfg = pcfg or PreAvgConfig()
    cfg = cfg or LmConfig()
    y = series.log_prices
    n = y.size - 1
    k = pcfg.window(n)
    rstar = preavg_returns(y, k, pcfg.weight)
    grid = np.arange(0, n - k + 2, k)
    seq = rstar[grid]
    n_day = n_per_day if n_per_day is not None else seq.size
    block = cfg.resolve_block(n_day)
    if seq.size < block:
        raise ValueError(f"series yields {seq.size} pre-averaged returns < block {block}")
    stamps = series.timestamps[grid + k - 1]
    total = preavg_rv(y, pcfg)
    result = _scan_returns(seq, stamps, cfg, n_day, max(total, 0.0))
    return result


def tick_gaps(series: TickSeries, cfg: MaxgapConfig | None = None) -> np.ndarray:
    """Signed gap profile g_j for every adjacent tick pair.

    For an up-move from tick j to j+1, the gap is the lowest price in
    the delta-observation window just after, minus the highest price in
    the window just before, floored at zero (mirrored for down-moves).
    |g_j| never exceeds the plain tick return and shrinks as delta
    grows, which is what makes the measure noise-robust.
    """
    cfg = cfg or MaxgapConfig()
    y = series.log_prices
    n = y.size
    if n < 2:
        raise ValueError("need at least two ticks")
    d = cfg.delta
    idx = np.arange(n - 1)
    max_b = y[idx].copy()
    min_b = y[idx].copy()
    max_f = y[idx + 1].copy()
    min_f = y[idx + 1].copy()
    for s in range(1, d + 1):
        back = np.maximum(idx - s, 0)
        fwd = np.minimum(idx + 1 + s, n - 1)
        np.maximum(max_b, y[back], out=max_b)
        np.minimum(min_b, y[back], out=min_b)
        np.maximum(max_f, y[fwd], out=max_f)
        np.minimum(min_f, y[fwd], out=min_f)
    up = y[idx + 1] > y[idx]
    down = y[idx + 1] < y[idx]
    gaps = np.zeros(n - 1)
    gaps[up] = np.maximum(0.0, (min_f - max_b)[up])
    gaps[down] = np.minimum(0.0, (max_f - min_b)[down])
    return gaps


def maxgap(series: TickSeries, interval: tuple[int, int] | None = None, cfg: MaxgapConfig | None = None) -> float:
    """Largest signed tick price gap over an interval (ms range).

    Sign follows the direction of the move; ties in |g| resolve to the
    earliest position.
    """
    if interval is not None:
        lo, hi = interval
        keep = (series.timestamps >= lo) & (series.timestamps <= hi)
        series = series.take(np.flatnonzero(keep))
    if len(series) < 2:
        raise ValueError("interval holds fewer than two ticks")
    gaps = tick_gaps(series, cfg)
    return float(gaps[int(np.argmax(np.abs(gaps)))])
