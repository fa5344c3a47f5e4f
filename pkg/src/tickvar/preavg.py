"""Variation measures on tick data: plain realized and bipower variation,
their pre-averaged noise- and outlier-robust versions, the truncated
bipower measure with iterative spike removal, and the noise diagnostics.

All numeric entry points accept either a TickSeries or a plain ndarray of
natural-log prices; arrays may carry leading batch dimensions (operations
apply along the last axis).  Throughout, N denotes the number of tick
returns, i.e. one less than the number of observations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve
from scipy.stats import norm

from .asymptotics import WeightFunction, min_weight, weight_constants

__all__ = [
    "PreAvgConfig",
    "VariationReport",
    "log_returns",
    "realized_variance",
    "bipower_variation",
    "noise_variance_ac",
    "preavg_returns",
    "preavg_rv",
    "preavg_bv",
    "threshold_tau",
    "truncated_preavg_bv",
    "jump_variation",
    "noise_ratio",
    "variation_report",
]

BIPOWER_FACTOR = math.pi / 2.0


class TruncationError(RuntimeError):
    """Spike removal failed to terminate within the iteration cap."""


def _log_prices(x) -> np.ndarray:
    if hasattr(x, "log_prices"):
        return x.log_prices
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class PreAvgConfig:
    """Settings shared by all starred (pre-averaged) measures.

    theta   pre-averaging horizon; the window is K = max(2, 2*round(theta*sqrt(N)/2)).
    weight  weight function; None selects the tent weight min(x, 1-x),
            for which the fast summation path applies.
    alpha   truncation quantile level, in (0, 1).
    varpi   truncation decay exponent, in (0, 0.25).

    Scaling factors and the threshold use the effective horizon K/sqrt(N)
    after rounding, so the noise bias correction cancels exactly.
    """

    theta: float = 1.0
    weight: WeightFunction | None = None
    alpha: float = 0.999
    varpi: float = 0.20

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < self.varpi < 0.25:
            raise ValueError("varpi must lie in (0, 0.25)")

    def window(self, n_returns: int) -> int:
        """Even pre-averaging window K for a series with n_returns returns."""
        if n_returns < 1:
            raise ValueError("need at least one return")
        return max(2, 2 * round(self.theta * math.sqrt(n_returns) / 2.0))

    def constants(self, window: int):
        if self.weight is None:
            # tent weight: psi1_k = 1, psi2_k = (1 + 2 K^-2) / 12 for even K
            return 1.0, (1.0 + 2.0 / window**2) / 12.0
        wc = weight_constants(self.weight, window)
        return wc.psi1_k, wc.psi2_k


@dataclass(frozen=True)
class VariationReport:
    """Per-interval variation measures; the universal estimation output.

    omega2_hat is the raw autocovariance-based noise variance (possibly
    negative); the starred measures clamp it at zero internally.  jv is
    the jump share (rv_star - bv_star_tau) / rv_star.
    """

    rv: float
    bv: float
    rv_star: float
    bv_star: float
    bv_star_tau: float
    omega2_hat: float
    gamma_hat: float
    jv: float
    n_obs: int
    truncation_iterations: int

    FIELDS = (
        "rv",
        "bv",
        "rv_star",
        "bv_star",
        "bv_star_tau",
        "omega2_hat",
        "gamma_hat",
        "jv",
        "n_obs",
        "truncation_iterations",
    )


def log_returns(x) -> np.ndarray:
    """Tick log returns r_i = logprice_i - logprice_{i-1} along the last axis."""
    y = _log_prices(x)
    if y.shape[-1] < 2:
        raise ValueError("need at least two observations")
    return np.diff(y, axis=-1)


def realized_variance(r: np.ndarray) -> float | np.ndarray:
    """Sum of squared returns."""
    r = np.asarray(r, dtype=float)
    if r.shape[-1] < 1:
        raise ValueError("need at least one return")
    out = np.sum(r * r, axis=-1)
    return float(out) if out.ndim == 0 else out


def bipower_variation(r: np.ndarray) -> float | np.ndarray:
    """Jump-robust variance estimate (pi/2) * sum |r_{i-1}| |r_i|, with the
    finite-sample factor N / (N - 1)."""
    r = np.asarray(r, dtype=float)
    n = r.shape[-1]
    if n < 2:
        raise ValueError("need at least two returns")
    a = np.abs(r)
    out = (n / (n - 1)) * BIPOWER_FACTOR * np.sum(a[..., 1:] * a[..., :-1], axis=-1)
    return float(out) if out.ndim == 0 else out


def noise_variance_ac(r: np.ndarray) -> float | np.ndarray:
    """Noise variance from the negative mean lag-1 return autocovariance.

    Can be negative (for instance on a strictly trending path); consumers
    that need a variance clamp at zero and report the raw value.
    """
    r = np.asarray(r, dtype=float)
    n = r.shape[-1]
    if n < 2:
        raise ValueError("need at least two returns")
    out = -np.sum(r[..., 1:] * r[..., :-1], axis=-1) / (n - 1)
    return float(out) if out.ndim == 0 else out


def preavg_returns(x, window: int, weight: WeightFunction | None = None) -> np.ndarray:
    """Pre-averaged returns over a local neighborhood of `window` ticks.

    With the default tent weight this is the second-half mean minus the
    first-half mean of the log prices, computed by cumulative sums; a
    general weight applies g(j/K) to the tick returns by convolution.
    Output length is N - K + 2 along the last axis.
    """
    y = _log_prices(x)
    k = int(window)
    n = y.shape[-1] - 1
    if k < 2 or k % 2:
        raise ValueError("window must be an even integer >= 2")
    if k > n:
        raise ValueError("window exceeds the number of returns")
    if weight is None:
        base = y - y[..., :1]  # improves cumsum conditioning; differences unchanged
        c = np.concatenate([np.zeros(base.shape[:-1] + (1,)), np.cumsum(base, axis=-1)], axis=-1)
        count = n - k + 2
        first = c[..., k // 2 : k // 2 + count] - c[..., 0:count]
        second = c[..., k : k + count] - c[..., k // 2 : k // 2 + count]
        return (second - first) / k
    taps = np.asarray(weight.g(np.arange(1, k) / k), dtype=float)
    r = np.diff(y, axis=-1)
    shape = [1] * r.ndim
    shape[-1] = taps.size
    return fftconvolve(r, taps[::-1].reshape(shape), mode="valid", axes=-1)


def _clamped_noise(r: np.ndarray):
    raw = noise_variance_ac(r)
    return raw, np.maximum(raw, 0.0)


def preavg_rv(x, cfg: PreAvgConfig) -> float | np.ndarray:
    """Noise- and outlier-robust realized variance on pre-averaged returns,
    with the residual-noise bias correction."""
    y = _log_prices(x)
    n = y.shape[-1] - 1
    k = cfg.window(n)
    if y.shape[-1] < k + 2:
        raise ValueError(f"series too short for theta={cfg.theta}: need at least {k + 2} observations")
    psi1_k, psi2_k = cfg.constants(k)
    rstar = preavg_returns(y, k, cfg.weight)
    _, omega2 = _clamped_noise(np.diff(y, axis=-1))
    theta_eff2 = k * k / n
    out = (n / (n - k + 2)) * np.sum(rstar * rstar, axis=-1) / (k * psi2_k)
    out = out - omega2 * psi1_k / (theta_eff2 * psi2_k)
    return float(out) if np.ndim(out) == 0 else out


def preavg_bv(x, cfg: PreAvgConfig) -> float | np.ndarray:
    """Jump-robust bipower analogue on pre-averaged returns at lag K."""
    y = _log_prices(x)
    n = y.shape[-1] - 1
    k = cfg.window(n)
    if y.shape[-1] < 2 * k + 2:
        raise ValueError(f"series too short for theta={cfg.theta}: need at least {2 * k + 2} observations")
    psi1_k, psi2_k = cfg.constants(k)
    rstar = preavg_returns(y, k, cfg.weight)
    a = np.abs(rstar)
    prods = a[..., : n - 2 * k + 2] * a[..., k : n - k + 2]
    _, omega2 = _clamped_noise(np.diff(y, axis=-1))
    theta_eff2 = k * k / n
    out = (n / (n - 2 * k + 2)) * BIPOWER_FACTOR * np.sum(prods, axis=-1) / (k * psi2_k)
    out = out - omega2 * psi1_k / (theta_eff2 * psi2_k)
    return float(out) if np.ndim(out) == 0 else out


def threshold_tau(omega2: float, sigma2: float, cfg: PreAvgConfig, n_returns: int) -> float:
    """Truncation level for pre-averaged returns:
    q_alpha / N^varpi * sqrt(psi2_K * theta * sigma2 + omega2 / theta),
    with q_alpha the standard-normal alpha-quantile and theta the
    effective horizon K/sqrt(N)."""
    if omega2 < 0 or sigma2 < 0:
        raise ValueError("variance inputs must be >= 0")
    k = cfg.window(n_returns)
    _, psi2_k = cfg.constants(k)
    theta_eff = k / math.sqrt(n_returns)
    q = norm.ppf(cfg.alpha)
    return q / n_returns**cfg.varpi * math.sqrt(psi2_k * theta_eff * sigma2 + omega2 / theta_eff)


def truncated_preavg_bv(x, cfg: PreAvgConfig, max_iterations: int = 50):
    """Pre-averaged bipower variation after iterative spike removal.

    Each pass recomputes the pre-averaged returns and the threshold from
    the current series (noise variance clamped at zero, variance proxy
    the current pre-averaged bipower measure).  Breaching windows are
    grouped into maximal consecutive runs; for each run the single
    largest-magnitude tick return feeding any breaching window is
    deleted (earliest wins a tie) and the log-price path is reconnected
    by shifting all later prices so the deleted increment vanishes.
    Stops when no window breaches; returns (value, passes).

    Raises TruncationError with diagnostics if the cap is exceeded.
    """
    y = _log_prices(x)
    if y.ndim != 1:
        raise ValueError("truncation operates on a single series")
    y = y.copy()
    iterations = 0
    while True:
        n = y.size - 1
        k = cfg.window(n)
        if y.size < 2 * k + 2:
            raise ValueError("series became too short during truncation")
        rstar = preavg_returns(y, k, cfg.weight)
        r = np.diff(y)
        _, omega2 = _clamped_noise(r)
        sigma2 = max(preavg_bv(y, cfg), 0.0)
        tau = threshold_tau(omega2, sigma2, cfg, n)
        breach = np.abs(rstar) > tau
        if not breach.any():
            return preavg_bv(y, cfg), iterations
        if iterations >= max_iterations:
            raise TruncationError(
                f"spike removal did not terminate in {max_iterations} passes "
                f"(n_obs={y.size}, breaches={int(breach.sum())}, tau={tau:.3e})"
            )
        drop: set[int] = set()
        idx = np.flatnonzero(breach)
        run_starts = np.flatnonzero(np.diff(idx, prepend=idx[0] - 2) > 1)
        bounds = np.append(run_starts, idx.size)
        for s, e in zip(bounds[:-1], bounds[1:]):
            a, b = idx[s], idx[e - 1]
            lo, hi = a, min(b + k - 1, r.size)  # tick returns feeding windows a..b
            j = lo + int(np.argmax(np.abs(r[lo:hi])))
            drop.add(j)
        keep = np.ones(r.size, dtype=bool)
        keep[list(drop)] = False
        y = np.concatenate([y[:1], y[0] + np.cumsum(r[keep])])
        iterations += 1


def jump_variation(rv_hat: float, iv_hat: float) -> float:
    """Jump share of total variation, (rv_hat - iv_hat) / rv_hat.

    Small negative values are legitimate measurement noise and are
    returned as is.
    """
    if rv_hat <= 0:
        raise ValueError("rv_hat must be positive")
    return (rv_hat - iv_hat) / rv_hat


def noise_ratio(omega2: float, iv_hat: float, n_returns: int) -> float:
    """Noise magnitude relative to price variation: sqrt(N * omega2 / iv_hat)."""
    if iv_hat <= 0:
        raise ValueError("iv_hat must be positive")
    if omega2 < 0:
        raise ValueError("omega2 must be >= 0")
    return math.sqrt(n_returns * omega2 / iv_hat)


def variation_report(x, cfg: PreAvgConfig | None = None) -> VariationReport:
    """All variation measures for one series at tick frequency."""
    cfg = cfg or PreAvgConfig()
    y = _log_prices(x)
    if y.ndim != 1:
        raise ValueError("variation_report operates on a single series")
    r = log_returns(y)
    rv = realized_variance(r)
    bv = bipower_variation(r)
    omega2_raw = noise_variance_ac(r)
    rv_star = preavg_rv(y, cfg)
    bv_star = preavg_bv(y, cfg)
    bv_star_tau, iters = truncated_preavg_bv(y, cfg)
    omega2 = max(omega2_raw, 0.0)
    gamma_hat = noise_ratio(omega2, bv_star_tau, r.size) if bv_star_tau > 0 else float("nan")
    jv = jump_variation(rv_star, bv_star_tau) if rv_star > 0 else float("nan")
    return VariationReport(
        rv=rv,
        bv=bv,
        rv_star=rv_star,
        bv_star=bv_star,
        bv_star_tau=bv_star_tau,
        omega2_hat=omega2_raw,
        gamma_hat=gamma_hat,
        jv=jv,
        n_obs=y.size,
        truncation_iterations=iters,
    )
