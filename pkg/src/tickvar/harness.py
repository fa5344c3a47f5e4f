"""Monte Carlo experiment drivers behind the CLI report commands:
the estimator grid over models and horizons, the horizon-signature
sweep, and the burst-of-volatility frequency signature.

All drivers are deterministic given (seed, paths); work fans out across
paths by path_id, so the results are independent of the parallelism
degree.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from functools import partial

import numpy as np
import pandas as pd

from .preavg import (
    PreAvgConfig,
    bipower_variation,
    jump_variation,
    preavg_bv,
    preavg_rv,
    realized_variance,
    truncated_preavg_bv,
)
from .simlab import GridSpec, NoiseSpec, SimSpec, simulate

TABLE2_MODELS = ("BM", "SV_HESTON", "SV2F_LEV", "BMJ", "BMO")
TABLE2_THETAS = (0.1, 0.5, 1.0, 2.0, 5.0)
ESTIMATORS = ("rv_star", "bv_star", "bv_star_tau")


def _chunks(n: int, jobs: int) -> list[range]:
    if jobs <= 1 or n <= 1:
        return [range(n)]
    size = -(-n // jobs)
    return [range(i, min(i + size, n)) for i in range(0, n, size)]


def _map_paths(fn, n_paths: int, jobs: int) -> list:
    """Apply fn to every path id, optionally across processes; the result
    list is ordered by path id regardless of scheduling.  fn must be a
    picklable callable (module-level function or partial of one)."""
    if jobs <= 1:
        return [fn(pid) for pid in range(n_paths)]
    out: list = [None] * n_paths
    chunks = _chunks(n_paths, jobs)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for ids, values in zip(chunks, pool.map(_run_chunk, [(fn, list(ids)) for ids in chunks])):
            for pid, val in zip(ids, values):
                out[pid] = val
    return out


def _run_chunk(arg):
    fn, ids = arg
    return [fn(pid) for pid in ids]


def _table2_worker(pid: int, spec: SimSpec, thetas) -> np.ndarray:
    """One path's (len(thetas), 3) normalized estimates for RV*, BV*, BV*_tau."""
    path = simulate(replace(spec, path_id=pid))
    y = path.observed_log_prices
    out = np.empty((len(thetas), 3))
    for i, theta in enumerate(thetas):
        cfg = PreAvgConfig(theta=theta)
        out[i, 0] = preavg_rv(y, cfg)
        out[i, 1] = preavg_bv(y, cfg)
        out[i, 2] = truncated_preavg_bv(y, cfg)[0]
    return out / path.true_iv


def _theta_sig_worker(pid: int, spec: SimSpec, thetas) -> np.ndarray:
    path = simulate(replace(spec, path_id=pid))
    y = path.observed_log_prices
    vals = np.empty((len(thetas), 2))
    for i, theta in enumerate(thetas):
        cfg = PreAvgConfig(theta=theta)
        vals[i, 0] = preavg_rv(y, cfg)
        vals[i, 1] = truncated_preavg_bv(y, cfg)[0]
    return vals


def _jv_sig_worker(pid: int, spec: SimSpec, samples_per_day) -> np.ndarray:
    path = simulate(replace(spec, path_id=pid))
    n_steps = spec.n_steps
    out = np.empty((len(samples_per_day), 2))
    for i, spd in enumerate(samples_per_day):
        step = n_steps // spd
        for j, y in enumerate((path.efficient_log_prices, path.observed_log_prices)):
            r = np.diff(y[::step])
            out[i, j] = jump_variation(realized_variance(r), bipower_variation(r))
    return out


def table2_grid(
    paths: int = 1_000,
    n_steps: int = 40_000,
    seed: int = 0,
    thetas=TABLE2_THETAS,
    models=TABLE2_MODELS,
    gamma: float = 0.5,
    betas=(0.0, 0.77),
    jobs: int = 1,
) -> pd.DataFrame:
    """Normalized means of the pre-averaged measures over a model grid.

    Every estimate is divided by its path's integrated variance, so an
    unbiased estimator averages to one (the jump model's raw measure
    averages to 1.25 by design).  Returns one row per
    (noise regime, model, estimator, theta) with the Monte Carlo
    standard error attached.
    """
    rows = []
    for beta in betas:
        noise = NoiseSpec(gamma=gamma, beta=beta)
        regime = f"beta={beta:g}"
        for model in models:
            spec = SimSpec(model=model, n_steps=n_steps, noise=noise, seed=seed)
            worker = partial(_table2_worker, spec=spec, thetas=tuple(thetas))
            vals = np.stack(_map_paths(worker, paths, jobs))  # (paths, thetas, 3)
            mean = vals.mean(axis=0)
            se = vals.std(axis=0, ddof=1) / np.sqrt(paths)
            for i, theta in enumerate(thetas):
                for j, est in enumerate(ESTIMATORS):
                    rows.append(
                        {
                            "noise": regime,
                            "model": model,
                            "estimator": est,
                            "theta": theta,
                            "mean": mean[i, j],
                            "mc_se": se[i, j],
                            "paths": paths,
                        }
                    )
    return pd.DataFrame(rows)


def theta_signature(
    model: str = "BM",
    paths: int = 200,
    n_steps: int = 40_000,
    gamma: float = 0.5,
    beta: float = 0.0,
    thetas=(0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0),
    seed: int = 0,
    jobs: int = 1,
) -> pd.DataFrame:
    """Mean noise-robust variance and bipower measures across a horizon
    grid, with the implied jump share; volatilities are percent per
    interval."""
    spec = SimSpec(model=model, n_steps=n_steps, noise=NoiseSpec(gamma=gamma, beta=beta), seed=seed)
    vals = np.stack(_map_paths(partial(_theta_sig_worker, spec=spec, thetas=tuple(thetas)), paths, jobs))
    mean = vals.mean(axis=0)
    jv = (vals[:, :, 0] - vals[:, :, 1]) / vals[:, :, 0]
    return pd.DataFrame(
        {
            "theta": thetas,
            "rv_star": mean[:, 0],
            "bv_star_tau": mean[:, 1],
            "rv_star_vol_pct": 100 * np.sqrt(np.maximum(mean[:, 0], 0)),
            "bv_star_tau_vol_pct": 100 * np.sqrt(np.maximum(mean[:, 1], 0)),
            "jv_mean": jv.mean(axis=0),
            "jv_se": jv.std(axis=0, ddof=1) / np.sqrt(paths),
        }
    )


def jv_signature(
    paths: int = 1_000,
    n_steps: int = 32_768,
    seed: int = 0,
    samples_per_day=(16, 32, 64, 128, 256, 512, 1024, 2048, 4096),
    gamma: float = 0.5,
    tick: float = 0.01,
    level: float = 50.0,
    jobs: int = 1,
) -> pd.DataFrame:
    """Implied jump share of the burst-of-volatility design versus the
    sampling frequency, both on latent (noise-free) prices and on noisy
    grid-rounded prices.

    The design has a continuous path (true jump share zero); whatever
    the plain variance-minus-bipower split attributes to jumps at a
    coarse frequency is finite-sample bias.  Frequencies must divide
    n_steps so the coarse grids nest.
    """
    for spd in samples_per_day:
        if n_steps % spd:
            raise ValueError(f"samples_per_day {spd} must divide n_steps {n_steps}")
    spec = SimSpec(
        model="BURST",
        n_steps=n_steps,
        noise=NoiseSpec(gamma=gamma),
        rounding=GridSpec(tick=tick, level=level),
        seed=seed,
    )
    worker = partial(_jv_sig_worker, spec=spec, samples_per_day=tuple(samples_per_day))
    vals = np.stack(_map_paths(worker, paths, jobs))
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(paths)
    spd = np.asarray(samples_per_day, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        df = pd.DataFrame(
            {
                "samples_per_day": samples_per_day,
                "jv_noisefree": mean[:, 0],
                "jv_noisefree_se": se[:, 0],
                "jv_noisy": mean[:, 1],
                "jv_noisy_se": se[:, 1],
                "log10_frequency": np.log10(spd),
                "log10_jv_noisefree": np.log10(np.where(mean[:, 0] > 0, mean[:, 0], np.nan)),
                "log10_jv_noisy": np.log10(np.where(mean[:, 1] > 0, mean[:, 1], np.nan)),
            }
        )
    return df
