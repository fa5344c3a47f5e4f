"""Synthetic tick-data laboratory: efficient-price models, microstructure
noise, outliers, and price-grid rounding, all reproducibly seeded.

Models
------
BM         scaled Brownian motion, constant variance (default 0.0391).
SV_HESTON  square-root stochastic variance, full-truncation Euler.
SV2F_LEV   two-factor log-volatility with leverage and a spliced
           exponential volatility function.
BMJ        BM plus a single jump whose squared size equals 25% of the
           mean diffusive variance, so jumps are 20% of mean total
           variation.
BMO        BM plus a single additive outlier (same size law as BMJ),
           affecting one observation only.
BURST      piecewise-constant volatility, tripled on [16/32, 17/32).

Randomness is counter-based (Philox) keyed by (seed, stream, path_id):
price diffusion, measurement noise, and jump/outlier placement are
independent streams, so regenerating any one component leaves the others
bit-identical, and path ensembles are reproducible under any parallel
schedule.

SV model parameters are not first-class constants of this package; they
are calibration defaults shipped in ``sim_calibrations.ini`` and may be
overridden per SimSpec via ``params``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numba
import numpy as np
from scipy.signal import lfilter

__all__ = [
    "NoiseSpec",
    "SimSpec",
    "SimPath",
    "MODELS",
    "calibration_defaults",
    "simulate",
    "simulate_many",
    "add_noise",
    "round_to_grid",
]

MODELS = ("BM", "SV_HESTON", "SV2F_LEV", "BMJ", "BMO", "BURST")

_STREAM_PRICE = 0
_STREAM_NOISE = 1
_STREAM_EVENT = 2

# Share of mean total variation carried by the single BMJ jump / BMO outlier.
_EVENT_VARIATION_SHARE = 0.20
# Jumps and outliers are placed uniformly on the interior of the sample so
# that pre-averaging windows of any practical horizon see the full event.
_INTERIOR_MARGIN = 0.05


def _rng(seed: int, stream: int, path_id: int) -> np.random.Generator:
    # Philox takes a 2x64-bit key; pack the stream id and path id into one word.
    key = [seed & 0xFFFFFFFFFFFFFFFF, ((stream & 0xFFFFFFFF) << 32) | (path_id & 0xFFFFFFFF)]
    return np.random.Generator(np.random.Philox(key=key))


def calibration_defaults(model: str) -> dict:
    """Load the shipped calibration defaults for an SV model.

    Values live in ``sim_calibrations.ini`` (user-overridable through
    ``SimSpec.params``); they are documented there as calibration
    defaults, not quantities this package claims to estimate.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with resources.files("tickvar").joinpath("sim_calibrations.ini").open("r") as fh:
        cp.read_file(fh)
    section = model.lower()
    if section not in cp:
        return {}
    return {k: float(v) for k, v in cp[section].items()}


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement-noise description.

    gamma   noise ratio sqrt(N * omega2 / IV); used to derive omega2 from
            the simulated path unless omega2 is given explicitly.
    omega2  explicit noise variance (overrides gamma when not None).
    beta    AR(1) coefficient of the noise; 0 gives i.i.d. noise, the
            calibrated dependent case uses 0.77.
    """

    gamma: float = 0.0
    omega2: float | None = None
    beta: float = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.omega2 is not None and self.omega2 < 0:
            raise ValueError("omega2 must be >= 0")
        if not abs(self.beta) < 1:
            raise ValueError("|beta| must be < 1")

    @property
    def is_null(self) -> bool:
        return (self.omega2 is None and self.gamma == 0.0) or self.omega2 == 0.0


@dataclass(frozen=True)
class GridSpec:
    """Price grid for discreteness: tick size and starting price level."""

    tick: float = 0.01
    level: float = 50.0

    def __post_init__(self):
        if self.tick <= 0 or self.level <= 0:
            raise ValueError("tick and level must be positive")


@dataclass(frozen=True)
class SimSpec:
    """Full description of one simulated path (deterministic given seeds).

    noise_seed defaults to seed; varying it alone redraws the noise
    while leaving the efficient price path bit-identical.
    """

    model: str
    n_steps: int = 40_000
    params: dict = field(default_factory=dict)
    noise: NoiseSpec = NoiseSpec()
    rounding: GridSpec | None = None
    seed: int = 0
    noise_seed: int | None = None
    path_id: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.n_steps < 2:
            raise ValueError("n_steps must be >= 2")


@dataclass(frozen=True)
class SimPath:
    """One simulated day: efficient and observed log prices plus ground truth.

    observed = efficient + noise + outliers, pointwise.  Lengths are
    n_steps + 1.  true_iv integrates the discretized spot variance
    (exposed as spot_variance, one value per step); true_jv_sum is the
    summed squared jump sizes.
    """

    efficient_log_prices: np.ndarray
    observed_log_prices: np.ndarray
    spot_variance: np.ndarray
    true_iv: float
    true_jv_sum: float
    jump_times: tuple[int, ...]
    outlier_times: tuple[int, ...]
    spec: SimSpec

    @property
    def n_obs(self) -> int:
        return self.efficient_log_prices.size

    def to_tick_series(self, instrument_id: str = "SIM", span_ms: int = 23_400_000):
        """Materialize observed prices as a TickSeries on an even ms clock."""
        from .marketdata import TickSeries

        n = self.n_obs
        ts = np.round(np.arange(n) * (span_ms / (n - 1))).astype(np.int64)
        return TickSeries(
            instrument_id=instrument_id,
            timestamps=ts,
            prices=np.exp(self.observed_log_prices),
        )


def _model_params(spec: SimSpec) -> dict:
    p = dict(calibration_defaults(spec.model))
    p.update(spec.params)
    return p


def _diffusion_variance(spec: SimSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-step spot variance and the price-driving normals.

    Returns (v, z) where v[i] is the variance over step i (length n) and
    z the standard normals for the price increments, already correlated
    with the variance innovations where the model has leverage.
    """
    n = spec.n_steps
    p = _model_params(spec)
    dt = 1.0 / n
    model = spec.model

    if model in ("BM", "BMJ", "BMO"):
        sigma2 = float(p.get("sigma2", 0.0391))
        if sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        z = rng.standard_normal(n)
        return np.full(n, sigma2), z

    if model == "BURST":
        base = float(p.get("sigma2", 0.16))
        mult = float(p.get("burst_multiplier", 3.0))
        lo = float(p.get("burst_start", 16 / 32))
        hi = float(p.get("burst_end", 17 / 32))
        if base < 0:
            raise ValueError("sigma2 must be >= 0")
        t = np.arange(n) * dt
        sig = np.where((t >= lo) & (t < hi), mult * math.sqrt(base), math.sqrt(base))
        z = rng.standard_normal(n)
        return sig**2, z

    if model == "SV_HESTON":
        kappa = float(p.get("kappa", 5.0))
        vbar = float(p.get("mean_variance", 0.0391))
        xi = float(p.get("vol_of_vol", 0.5))
        rho = float(p.get("corr", 0.0))
        if kappa <= 0 or vbar <= 0 or xi < 0:
            raise ValueError("Heston requires kappa > 0, mean_variance > 0, vol_of_vol >= 0")
        if not -1 <= rho <= 1:
            raise ValueError("corr must be in [-1, 1]")
        zv = rng.standard_normal(n)
        zp = rng.standard_normal(n)
        # stationary start: Gamma(2*kappa*vbar/xi^2, xi^2/(2*kappa))
        if xi > 0:
            shape = 2 * kappa * vbar / xi**2
            v0 = rng.gamma(shape, xi**2 / (2 * kappa))
        else:
            v0 = vbar
        v = _sqrt_variance_path(float(v0), zv, kappa, vbar, xi, dt)
        z = rho * zv + math.sqrt(1 - rho**2) * zp
        return v, z

    if model == "SV2F_LEV":
        b0 = float(p.get("level_log", -1.2))
        b1 = float(p.get("slow_weight", 0.04))
        b2 = float(p.get("fast_weight", 1.5))
        a1 = float(p.get("slow_reversion", -0.00137))
        a2 = float(p.get("fast_reversion", -1.386))
        phi = float(p.get("fast_feedback", 0.25))
        r1 = float(p.get("leverage_slow", -0.3))
        r2 = float(p.get("leverage_fast", -0.3))
        if a1 >= 0 or a2 >= 0:
            raise ValueError("factor reversions must be negative")
        z1 = rng.standard_normal(n)
        z2 = rng.standard_normal(n)
        zp = rng.standard_normal(n)
        f1_0 = rng.normal(0.0, math.sqrt(-1.0 / (2 * a1)))
        var2 = -1.0 / (2 * a2 + phi**2) if 2 * a2 + phi**2 < 0 else 1.0
        f2_0 = rng.normal(0.0, math.sqrt(var2))
        f1 = _ou_factor_path(float(f1_0), z1, a1, 0.0, dt)
        f2 = _ou_factor_path(float(f2_0), z2, a2, phi, dt)
        sig = _spliced_exp(b0 + b1 * f1[:-1] + b2 * f2[:-1])
        # leverage: price shocks load on both factor innovations
        lam = math.sqrt(max(1 - r1**2 - r2**2, 0.0))
        z = r1 * z1 + r2 * z2 + lam * zp
        return sig**2, z

    raise AssertionError(f"unhandled model {model}")


@numba.njit(cache=True)
def _sqrt_variance_path(v0: float, zv: np.ndarray, kappa: float, vbar: float, xi: float, dt: float) -> np.ndarray:
    """Full-truncation Euler for a square-root variance process.

    The variance is floored at zero inside both drift and diffusion;
    v[i] is the (floored) variance applied over step i.
    """
    n = zv.size
    v = np.empty(n)
    vi = v0
    sq = math.sqrt(dt)
    for i in range(n):
        vplus = vi if vi > 0.0 else 0.0
        v[i] = vplus
        vi = vi + kappa * (vbar - vplus) * dt + xi * math.sqrt(vplus) * sq * zv[i]
    return v


@numba.njit(cache=True)
def _ou_factor_path(f0: float, z: np.ndarray, a: float, phi: float, dt: float) -> np.ndarray:
    """Euler path of df = a f dt + (1 + phi f) dB, length len(z) + 1."""
    n = z.size
    f = np.empty(n + 1)
    f[0] = f0
    sq = math.sqrt(dt)
    for i in range(n):
        f[i + 1] = f[i] + a * f[i] * dt + (1.0 + phi * f[i]) * sq * z[i]
    return f


def _spliced_exp(u: np.ndarray) -> np.ndarray:
    """Exponential spliced to square-root growth above u0 = log(1.5).

    Keeps the two-factor volatility function integrable while matching
    exp() (value and slope) at the splice point.
    """
    u0 = math.log(1.5)
    out = np.where(u <= u0, np.exp(np.minimum(u, u0)), math.exp(u0) * np.sqrt(1 - u0 + np.square(u) / u0))
    return out


def simulate(spec: SimSpec) -> SimPath:
    """Generate one path: efficient log prices, events, noise, rounding.

    The efficient price is an Euler scheme with n_steps steps on [0, 1]
    and zero drift.  For BMJ (BMO) a single jump (outlier) with
    Rademacher sign and fixed magnitude is placed uniformly on the
    interior 5%..95% of the sample; its squared size is one quarter of
    the mean diffusive variance, i.e. 20% of mean total variation.
    Deterministic given the spec, including the seed fields.
    """
    n = spec.n_steps
    rng_price = _rng(spec.seed, _STREAM_PRICE, spec.path_id)
    v, z = _diffusion_variance(spec, rng_price)
    dt = 1.0 / n
    increments = np.sqrt(v * dt) * z
    x = np.empty(n + 1)
    x[0] = 0.0
    np.cumsum(increments, out=x[1:])
    true_iv = float(np.sum(v) * dt)

    jump_times: tuple[int, ...] = ()
    outlier_times: tuple[int, ...] = ()
    true_jv = 0.0
    observed = x.copy()

    if spec.model in ("BMJ", "BMO"):
        rng_event = _rng(spec.seed, _STREAM_EVENT, spec.path_id)
        p = _model_params(spec)
        sigma2 = float(p.get("sigma2", 0.0391))
        share = float(p.get("event_share", _EVENT_VARIATION_SHARE))
        size = math.sqrt(share / (1 - share) * sigma2)
        sign = 1.0 if rng_event.random() < 0.5 else -1.0
        lo = int(math.ceil(_INTERIOR_MARGIN * n))
        hi = n - lo
        pos = int(rng_event.integers(lo, hi + 1))
        if spec.model == "BMJ":
            x[pos:] += sign * size
            observed = x.copy()
            jump_times = (pos,)
            true_jv = size**2
        else:
            observed[pos] += sign * size
            outlier_times = (pos,)

    path = SimPath(
        efficient_log_prices=x,
        observed_log_prices=observed,
        spot_variance=v,
        true_iv=true_iv,
        true_jv_sum=true_jv,
        jump_times=jump_times,
        outlier_times=outlier_times,
        spec=spec,
    )
    if not spec.noise.is_null:
        path = add_noise(path, spec.noise)
    if spec.rounding is not None:
        path = round_to_grid(path, spec.rounding.tick, spec.rounding.level)
    return path


def simulate_many(spec: SimSpec, n_paths: int) -> list[SimPath]:
    """Simulate n_paths independent paths by varying path_id."""
    return [simulate(replace(spec, path_id=pid)) for pid in range(n_paths)]


def noise_series(noise: NoiseSpec, omega2: float, n_obs: int, seed: int, path_id: int = 0) -> np.ndarray:
    """Draw the noise process u (length n_obs) for a given variance."""
    rng = _rng(seed, _STREAM_NOISE, path_id)
    if omega2 == 0.0:
        return np.zeros(n_obs)
    sd = math.sqrt(omega2)
    if noise.beta == 0.0:
        return rng.normal(0.0, sd, size=n_obs)
    beta = noise.beta
    eps = rng.normal(0.0, sd * math.sqrt(1 - beta**2), size=n_obs)
    u = np.empty(n_obs)
    u[0] = rng.normal(0.0, sd)
    u[1:] = lfilter([1.0], [1.0, -beta], eps[1:], zi=np.array([beta * u[0]]))[0]
    return u


def add_noise(path: SimPath, noise: NoiseSpec) -> SimPath:
    """Overlay measurement noise on the observed prices.

    In gamma mode the noise variance is gamma^2 * true_iv / N, which
    requires true_iv > 0.  The noise stream is keyed independently of
    the price stream, so efficient prices are unaffected bit-for-bit.
    """
    if noise.omega2 is not None:
        omega2 = noise.omega2
    else:
        if noise.gamma > 0 and path.true_iv <= 0:
            raise ValueError("gamma-mode noise needs true_iv > 0")
        omega2 = noise.gamma**2 * path.true_iv / (path.n_obs - 1)
    seed = path.spec.seed if path.spec.noise_seed is None else path.spec.noise_seed
    u = noise_series(noise, omega2, path.n_obs, seed, path.spec.path_id)
    return replace(path, observed_log_prices=path.observed_log_prices + u)


def round_to_grid(path: SimPath, tick: float, level: float) -> SimPath:
    """Snap observed prices to a level-space grid (tick size, start level).

    Level-space price level*exp(Y - Y0) is rounded to the nearest tick
    and mapped back to log space; efficient prices are untouched.
    """
    if tick <= 0 or level <= 0:
        raise ValueError("tick and level must be positive")
    y = path.observed_log_prices
    levels = level * np.exp(y - y[0])
    snapped = np.round(levels / tick) * tick
    if np.any(snapped <= 0):
        raise ValueError("rounding produced a non-positive price")
    rounded = y[0] + np.log(snapped / level)
    return replace(path, observed_log_prices=rounded)
