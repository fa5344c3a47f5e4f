"""Command-line front end: ingestion, cleaning, estimation, and the
simulation-backed report harnesses.

Commands: estimate, simulate, table2, signature, jumpscan.  All outputs
are CSV with a header row plus a plain key=value metadata sidecar; report
commands also render a companion PNG figure.  Exit codes: 0 success,
1 computation error, 2 input error.  Runs are deterministic given the
configuration and seed, including under --jobs parallelism.
"""

from __future__ import annotations

import argparse
import configparser
import glob
import os
import sys

import numpy as np
import pandas as pd

from . import harness, report
from .cleaning import BfmConfig, QuoteFilterConfig, bfm_trade_filter, bnhls_quote_filter
from .jumpdetect import LmConfig, MaxgapConfig, lm_scan, maxgap, preavg_lm_scan
from .marketdata import (
    ParseError,
    SchemaSpec,
    SessionWindow,
    aggregate_by_millisecond,
    clip_session,
    parse_quotes,
    parse_ticks,
)
from .preavg import (
    PreAvgConfig,
    VariationReport,
    bipower_variation,
    jump_variation,
    log_returns,
    realized_variance,
    variation_report,
)
from .simlab import GridSpec, NoiseSpec, SimSpec, simulate

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_INPUT = 2

FREQ_MS = {"5min": 300_000, "15min": 900_000}
DEFAULT_SESSION_MS = 23_400_000  # 6.5 hour equity session

ESTIMATE_COLUMNS = (
    "instrument_day",
    "frequency",
    "n_obs",
    "rv",
    "bv",
    "rv_star",
    "bv_star",
    "bv_star_tau",
    "omega2_hat",
    "gamma_hat",
    "jv",
    "truncation_iterations",
)


def _load_config(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path:
        if not os.path.exists(path):
            raise ParseError(f"config file not found: {path}")
        cp.read(path)
    return cp


def _schema(cp: configparser.ConfigParser) -> SchemaSpec:
    sec = cp["schema"] if "schema" in cp else {}
    return SchemaSpec(
        timestamp=sec.get("timestamp", "timestamp"),
        price=sec.get("price", "price"),
        size=sec.get("size") or None,
        side=sec.get("side") or None,
        bid=sec.get("bid", "bid"),
        ask=sec.get("ask", "ask"),
        condition=sec.get("condition") or None,
        timestamp_kind=sec.get("timestamp_kind", "millis"),
        delimiter=sec.get("delimiter", ","),
        timezone=sec.get("timezone", ""),
        max_regression_ms=int(sec.get("max_regression_ms", "0")),
    )


def _session(cp: configparser.ConfigParser) -> SessionWindow | None:
    if "session" not in cp:
        return None
    sec = cp["session"]
    return SessionWindow.from_clock(sec.get("start", "09:30"), sec.get("end", "16:00"), sec.get("timezone", ""))


def _input_files(path: str) -> list[str]:
    if os.path.isdir(path):
        return sorted(
            f for pattern in ("*.csv", "*.tsv", "*.txt") for f in glob.glob(os.path.join(path, pattern))
        )
    if os.path.exists(path):
        return [path]
    raise ParseError(f"input not found: {path}")


def _write_metadata(path: str, values: dict) -> None:
    with open(path, "w") as fh:
        for key in sorted(values):
            fh.write(f"{key}={values[key]}\n")


def _write_csv(df: pd.DataFrame, path: str) -> None:
    df.to_csv(path, index=False, float_format="%.12g")


def _coarse_row(series, grid_ms: int, span_ms: int) -> dict:
    bounds = np.arange(0, span_ms // grid_ms + 1) * grid_ms
    pos = np.searchsorted(series.timestamps, bounds, side="right") - 1
    prices = series.log_prices[pos[pos >= 0]]
    r = np.diff(prices)
    rv = realized_variance(r)
    bv = bipower_variation(r)
    return {
        "n_obs": prices.size,
        "rv": rv,
        "bv": bv,
        "rv_star": np.nan,
        "bv_star": np.nan,
        "bv_star_tau": np.nan,
        "omega2_hat": np.nan,
        "gamma_hat": np.nan,
        "jv": jump_variation(rv, bv) if rv > 0 else np.nan,
        "truncation_iterations": 0,
    }


def _load_day(path: str, schema: SchemaSpec, session: SessionWindow | None, aggregate: bool):
    series, skipped = parse_ticks(path, schema)
    if session is not None:
        series = clip_session(series, session)
        if len(series) == 0:
            raise ParseError(f"no ticks inside the session window in {path}")
    if aggregate:
        series = aggregate_by_millisecond(series)
    return series, skipped


def cmd_estimate(args) -> int:
    cp = _load_config(args.config)
    schema = _schema(cp)
    session = _session(cp)
    span = session.span_ms if session else DEFAULT_SESSION_MS
    frequencies = [f.strip() for f in args.frequency.split(",")] if args.frequency else ["tick", "5min", "15min"]
    cfg = PreAvgConfig(theta=args.theta)
    rows, failures = [], []
    for f in _input_files(args.input):
        name = os.path.splitext(os.path.basename(f))[0]
        try:
            series, _ = _load_day(f, schema, session, aggregate=not args.no_aggregate)
            for freq in frequencies:
                if freq == "tick":
                    rep = variation_report(series, cfg)
                    row = {k: getattr(rep, k) for k in VariationReport.FIELDS}
                else:
                    row = _coarse_row(series, FREQ_MS[freq], max(span, int(series.timestamps[-1])))
                rows.append({"instrument_day": name, "frequency": freq, **row})
        except (ParseError, FileNotFoundError, ValueError) as exc:
            failures.append(f"{f}: {exc}")
    if failures:
        for line in failures:
            print(f"error: {line}", file=sys.stderr)
    if not rows:
        print("error: zero parseable rows", file=sys.stderr)
        return EXIT_INPUT
    os.makedirs(args.out, exist_ok=True)
    df = pd.DataFrame(rows, columns=list(ESTIMATE_COLUMNS))
    _write_csv(df, os.path.join(args.out, "estimates.csv"))
    _write_csv(_estimate_summary(df), os.path.join(args.out, "estimates_summary.csv"))
    _write_metadata(
        os.path.join(args.out, "estimates_meta.txt"),
        {
            "command": "estimate",
            "theta": args.theta,
            "alpha": cfg.alpha,
            "varpi": cfg.varpi,
            "frequencies": ",".join(frequencies),
            "session_span_ms": span,
            "aggregate_by_millisecond": not args.no_aggregate,
            "files": len(rows) and df["instrument_day"].nunique(),
            "failures": len(failures),
        },
    )
    if not args.no_figures:
        report.render_estimates(df, os.path.join(args.out, "estimates.png"))
    return EXIT_INPUT if failures else EXIT_OK


def _estimate_summary(df: pd.DataFrame) -> pd.DataFrame:
    """Cross-day averages per frequency, in variance and annualized-vol
    units; the jump share is reported both as the mean of daily shares
    and as the share implied by the averaged variances."""
    out = []
    for freq, grp in df.groupby("frequency", sort=False):
        qv = grp["rv_star"] if freq == "tick" else grp["rv"]
        iv = grp["bv_star_tau"] if freq == "tick" else grp["bv"]
        mean_qv, mean_iv = qv.mean(), iv.mean()
        out.append(
            {
                "frequency": freq,
                "days": len(grp),
                "mean_qv": mean_qv,
                "mean_iv": mean_iv,
                "ann_vol_qv_pct": 100 * np.sqrt(252 * mean_qv) if mean_qv > 0 else np.nan,
                "ann_vol_iv_pct": 100 * np.sqrt(252 * mean_iv) if mean_iv > 0 else np.nan,
                "jv_mean_of_daily": grp["jv"].mean(),
                "jv_of_mean_variances": (mean_qv - mean_iv) / mean_qv if mean_qv > 0 else np.nan,
            }
        )
    return pd.DataFrame(out)


def cmd_simulate(args) -> int:
    cp = _load_config(args.config)
    sec = cp["simulate"] if "simulate" in cp else {}
    rounding = None
    if args.round_tick:
        rounding = GridSpec(tick=args.round_tick, level=args.round_level)
    spec = SimSpec(
        model=args.model or sec.get("model", "BM"),
        n_steps=args.n_steps,
        noise=NoiseSpec(gamma=args.gamma, beta=args.beta),
        rounding=rounding,
        seed=args.seed,
    )
    os.makedirs(args.out, exist_ok=True)
    from dataclasses import replace

    for pid in range(args.paths):
        path = simulate(replace(spec, path_id=pid))
        df = pd.DataFrame(
            {
                "index": np.arange(path.n_obs),
                "efficient": path.efficient_log_prices,
                "observed": path.observed_log_prices,
            }
        )
        _write_csv(df, os.path.join(args.out, f"path_{pid:05d}.csv"))
        _write_metadata(
            os.path.join(args.out, f"path_{pid:05d}_meta.txt"),
            {
                "model": spec.model,
                "n_steps": spec.n_steps,
                "seed": spec.seed,
                "path_id": pid,
                "gamma": spec.noise.gamma,
                "beta": spec.noise.beta,
                "rounding_tick": rounding.tick if rounding else "",
                "rounding_level": rounding.level if rounding else "",
                "true_iv": repr(path.true_iv),
                "true_jv_sum": repr(path.true_jv_sum),
                "jump_times": ",".join(map(str, path.jump_times)),
                "outlier_times": ",".join(map(str, path.outlier_times)),
            },
        )
    return EXIT_OK


def cmd_table2(args) -> int:
    df = harness.table2_grid(paths=args.paths, n_steps=args.n_steps, seed=args.seed, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    _write_csv(df, os.path.join(args.out, "table2.csv"))
    _write_metadata(
        os.path.join(args.out, "table2_meta.txt"),
        {"command": "table2", "paths": args.paths, "n_steps": args.n_steps, "seed": args.seed},
    )
    if not args.no_figures:
        report.render_table2(df, os.path.join(args.out, "table2.png"))
    return EXIT_OK


def cmd_signature(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.kind == "theta":
        thetas = tuple(float(t) for t in args.theta_grid.split(",")) if args.theta_grid else None
        if any(t <= 0 for t in thetas or ()):
            raise ValueError("theta grid values must be positive")
        kwargs = {"thetas": thetas} if thetas else {}
        df = harness.theta_signature(
            model=args.model or "BM", paths=args.paths, n_steps=args.n_steps, seed=args.seed, jobs=args.jobs, **kwargs
        )
        _write_csv(df, os.path.join(args.out, "signature_theta.csv"))
        if not args.no_figures:
            report.render_theta_signature(df, os.path.join(args.out, "signature_theta.png"))
        meta = {"command": "signature", "kind": "theta", "paths": args.paths, "seed": args.seed}
    else:
        df = harness.jv_signature(paths=args.paths, seed=args.seed, jobs=args.jobs)
        _write_csv(df, os.path.join(args.out, "signature_jv.csv"))
        if not args.no_figures:
            report.render_jv_signature(df, os.path.join(args.out, "signature_jv.png"))
        meta = {"command": "signature", "kind": "jv", "paths": args.paths, "seed": args.seed}
    _write_metadata(os.path.join(args.out, f"signature_{args.kind}_meta.txt"), meta)
    return EXIT_OK


def cmd_jumpscan(args) -> int:
    cp = _load_config(args.config)
    schema = _schema(cp)
    session = _session(cp)
    span = session.span_ms if session else DEFAULT_SESSION_MS
    grid_ms = FREQ_MS.get(args.frequency or "5min", 300_000)
    pcfg = PreAvgConfig(theta=args.theta)
    summaries, events_rows, failures = [], [], []
    for f in _input_files(args.input):
        name = os.path.splitext(os.path.basename(f))[0]
        try:
            series, _ = _load_day(f, schema, session, aggregate=True)
            coarse = lm_scan(series, grid_ms, LmConfig(), session_span_ms=span)
            fine = preavg_lm_scan(series, pcfg, LmConfig())
            mg_cfg = MaxgapConfig()
            gaps = []
            for ev in coarse.events:
                g = maxgap(series, (ev.timestamp - grid_ms, ev.timestamp), mg_cfg)
                gaps.append(g)
                events_rows.append(
                    {
                        "instrument_day": name,
                        "kind": "grid",
                        "timestamp": ev.timestamp,
                        "statistic": ev.statistic,
                        "size": ev.size,
                        "maxgap": g,
                    }
                )
            for ev in fine.events:
                events_rows.append(
                    {
                        "instrument_day": name,
                        "kind": "preavg",
                        "timestamp": ev.timestamp,
                        "statistic": ev.statistic,
                        "size": ev.size,
                        "maxgap": np.nan,
                    }
                )
            summaries.append(
                {
                    "instrument_day": name,
                    "grid_j_count": coarse.jump_count,
                    "grid_j_avg": coarse.mean_abs_size,
                    "grid_j_max": coarse.max_abs_size,
                    "grid_jv": coarse.implied_jv,
                    "preavg_j_count": fine.jump_count,
                    "preavg_j_avg": fine.mean_abs_size,
                    "preavg_j_max": fine.max_abs_size,
                    "preavg_jv": fine.implied_jv,
                    "maxgap_avg": float(np.mean(np.abs(gaps))) if gaps else 0.0,
                    "maxgap_max": float(np.max(np.abs(gaps))) if gaps else 0.0,
                }
            )
        except (ParseError, FileNotFoundError, ValueError) as exc:
            failures.append(f"{f}: {exc}")
    if failures:
        for line in failures:
            print(f"error: {line}", file=sys.stderr)
    if not summaries:
        print("error: zero parseable rows", file=sys.stderr)
        return EXIT_INPUT
    os.makedirs(args.out, exist_ok=True)
    _write_csv(pd.DataFrame(summaries), os.path.join(args.out, "jumpscan_summary.csv"))
    events_df = pd.DataFrame(events_rows, columns=["instrument_day", "kind", "timestamp", "statistic", "size", "maxgap"])
    _write_csv(events_df, os.path.join(args.out, "jumpscan_events.csv"))
    _write_metadata(
        os.path.join(args.out, "jumpscan_meta.txt"),
        {"command": "jumpscan", "grid_ms": grid_ms, "theta": args.theta, "session_span_ms": span},
    )
    if not args.no_figures:
        grid_events = events_df[events_df["kind"] == "grid"]
        report.render_jumpscan(grid_events, os.path.join(args.out, "jumpscan.png"))
    return EXIT_INPUT if failures else EXIT_OK


def clean_quotes_cli(quote_path: str, schema: SchemaSpec, cfg: QuoteFilterConfig | None = None):
    """Convenience wrapper: parse and clean one quote file."""
    quotes, _ = parse_quotes(quote_path, schema)
    return bnhls_quote_filter(quotes, cfg)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tickvar", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_input=False):
        sp.add_argument("--config", default=None, help="INI config file")
        if needs_input:
            sp.add_argument("--input", required=True, help="input file or directory")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--theta", type=float, default=1.0, help="pre-averaging horizon")
        sp.add_argument("--paths", type=int, default=1000, help="simulation paths")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=1, help="parallel workers")
        sp.add_argument("--frequency", default=None, help="grid frequency or comma list")
        sp.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    sp = sub.add_parser("estimate", help="variation reports from tick files")
    common(sp, needs_input=True)
    sp.add_argument("--no-aggregate", action="store_true", help="skip millisecond aggregation")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("simulate", help="write synthetic paths to CSV")
    common(sp)
    sp.add_argument("--model", default="BM")
    sp.add_argument("--n-steps", type=int, default=40_000)
    sp.add_argument("--gamma", type=float, default=0.0)
    sp.add_argument("--beta", type=float, default=0.0)
    sp.add_argument("--round-tick", type=float, default=None)
    sp.add_argument("--round-level", type=float, default=50.0)
    sp.set_defaults(func=cmd_simulate, paths=1)

    sp = sub.add_parser("table2", help="normalized estimator grid over models and horizons")
    common(sp)
    sp.add_argument("--n-steps", type=int, default=40_000)
    sp.set_defaults(func=cmd_table2)

    sp = sub.add_parser("signature", help="horizon or frequency signature data")
    common(sp)
    sp.add_argument("--kind", choices=("theta", "jv"), required=True)
    sp.add_argument("--model", default=None)
    sp.add_argument("--n-steps", type=int, default=40_000)
    sp.add_argument("--theta-grid", default=None, help="comma-separated horizons")
    sp.set_defaults(func=cmd_signature)

    sp = sub.add_parser("jumpscan", help="jump detections and tick gaps from tick files")
    common(sp, needs_input=True)
    sp.set_defaults(func=cmd_jumpscan)

    return p


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # computation failures
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
