"""Non-interactive figure rendering for the CLI report commands.

Each report command writes delimited output first; these helpers render a
companion PNG next to it.  Rendering is file-only (Agg backend), never a
GUI.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

_STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


def _save(fig, path: str) -> None:
    fig.savefig(path)
    plt.close(fig)


def render_table2(df: pd.DataFrame, path: str) -> None:
    """Normalized means versus horizon, one panel per noise regime."""
    regimes = list(dict.fromkeys(df["noise"]))
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, len(regimes), figsize=(5.5 * len(regimes), 4.0), squeeze=False)
        for ax, regime in zip(axes[0], regimes):
            sub = df[df["noise"] == regime]
            for (model, est), grp in sub.groupby(["model", "estimator"], sort=False):
                ax.plot(grp["theta"], grp["mean"], marker="o", ms=3, lw=1, label=f"{model} {est}")
            ax.axhline(1.0, color="k", lw=0.8, ls="--")
            ax.set_xscale("log")
            ax.set_xlabel("horizon theta")
            ax.set_ylabel("normalized mean")
            ax.set_title(regime)
        axes[0, -1].legend(fontsize=6, ncol=2, frameon=False)
        _save(fig, path)


def render_theta_signature(df: pd.DataFrame, path: str) -> None:
    with plt.rc_context(_STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
        ax1.plot(df["theta"], df["rv_star_vol_pct"], marker="o", ms=3, label="total variation")
        ax1.plot(df["theta"], df["bv_star_tau_vol_pct"], marker="s", ms=3, label="diffusive part")
        ax1.set_xscale("log")
        ax1.set_xlabel("horizon theta")
        ax1.set_ylabel("volatility (%)")
        ax1.legend(frameon=False)
        ax2.plot(df["theta"], 100 * df["jv_mean"], marker="o", ms=3, color="tab:red")
        ax2.set_xscale("log")
        ax2.set_xlabel("horizon theta")
        ax2.set_ylabel("jump share (%)")
        _save(fig, path)


def render_jv_signature(df: pd.DataFrame, path: str) -> None:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 4.2))
        ax.plot(df["samples_per_day"], df["jv_noisefree"], "o-", ms=4, label="latent prices")
        ax.plot(df["samples_per_day"], df["jv_noisy"], "+-", ms=6, label="noisy prices")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("samples per day")
        ax.set_ylabel("implied jump share")
        ax.legend(frameon=False)
        _save(fig, path)


def render_estimates(df: pd.DataFrame, path: str) -> None:
    """Daily jump share by frequency across the estimation run."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.5, 4.0))
        for freq, grp in df.groupby("frequency", sort=False):
            ax.plot(range(len(grp)), 100 * grp["jv"], marker="o", ms=3, lw=0.8, label=freq)
        ax.axhline(0.0, color="k", lw=0.8)
        ax.set_xlabel("instrument-day")
        ax.set_ylabel("jump share (%)")
        ax.legend(frameon=False)
        _save(fig, path)


def render_jumpscan(events: pd.DataFrame, path: str) -> None:
    """Coarse jump sizes against the tick-level gap over the same window."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 4.8))
        if len(events):
            ax.scatter(100 * events["size"], 100 * events["maxgap"], s=12, alpha=0.7)
        lim = max(1e-6, *(abs(100 * events[c]).max() for c in ("size", "maxgap"))) if len(events) else 1.0
        ax.plot([-lim, lim], [-lim, lim], "k-", lw=0.8)
        ax.set_xlabel("grid jump size (%)")
        ax.set_ylabel("tick maxgap (%)")
        _save(fig, path)
