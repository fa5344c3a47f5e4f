"""Canonical in-memory market data series and delimited-text ingestion.

Timestamps are integer milliseconds on the clock declared by the input
schema (offsets as given, or milliseconds from midnight for wall-clock
formats); session clipping rebases them to milliseconds from session
start.  Prices are stored in levels and converted to natural-log prices
once at construction.  All series are immutable after construction and
safe to share across threads.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

__all__ = [
    "ParseError",
    "SchemaSpec",
    "SessionWindow",
    "TickSeries",
    "QuoteSeries",
    "parse_ticks",
    "parse_quotes",
    "write_ticks",
    "aggregate_by_millisecond",
    "mid_quote",
    "clip_session",
]

log = logging.getLogger(__name__)

SIDES = ("paid", "given", "unknown")
_SIDE_ALIASES = {
    "paid": "paid",
    "p": "paid",
    "buy": "paid",
    "b": "paid",
    "given": "given",
    "g": "given",
    "sell": "given",
    "s": "given",
}


class ParseError(ValueError):
    """Raised for unusable input files (missing data, broken clocks)."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SessionWindow:
    """Trading session [start, end] as wall-clock ms with a timezone label."""

    start_ms: int
    end_ms: int
    timezone: str = ""

    def __post_init__(self):
        if self.start_ms >= self.end_ms:
            raise ValueError("session start must precede end")

    @classmethod
    def from_clock(cls, start: str, end: str, timezone: str = "") -> "SessionWindow":
        return cls(_clock_to_ms(start), _clock_to_ms(end), timezone)

    @property
    def span_ms(self) -> int:
        return self.end_ms - self.start_ms


def _clock_to_ms(text: str) -> int:
    parts = text.strip().split(":")
    if not 2 <= len(parts) <= 3:
        raise ValueError(f"bad clock time {text!r}")
    h, m = int(parts[0]), int(parts[1])
    sec = float(parts[2]) if len(parts) == 3 else 0.0
    return int(round(((h * 60 + m) * 60 + sec) * 1000))


@dataclass(frozen=True)
class SchemaSpec:
    """Maps delimited-text columns onto the canonical series fields.

    timestamp_kind: 'millis' for integer offsets, 'clock' for
    HH:MM:SS(.fff) wall time, 'iso' for full datetimes (converted to ms
    from midnight of each row's date).  max_regression_ms bounds how far
    a timestamp may run backwards before the file is rejected; small
    regressions within the bound are repaired by a stable sort.
    """

    timestamp: str = "timestamp"
    price: str = "price"
    size: str | None = None
    side: str | None = None
    bid: str = "bid"
    ask: str = "ask"
    bid_size: str | None = None
    ask_size: str | None = None
    condition: str | None = None
    timestamp_kind: str = "millis"
    delimiter: str = ","
    timezone: str = ""
    max_regression_ms: int = 0

    def __post_init__(self):
        if self.timestamp_kind not in ("millis", "clock", "iso"):
            raise ValueError("timestamp_kind must be 'millis', 'clock' or 'iso'")


@dataclass(frozen=True)
class TickSeries:
    """Timestamped event-level prices (trades or mid quotes)."""

    instrument_id: str
    timestamps: np.ndarray
    prices: np.ndarray
    sizes: np.ndarray | None = None
    sides: np.ndarray | None = None
    log_prices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ts = _frozen(np.asarray(self.timestamps, dtype=np.int64))
        px = _frozen(np.asarray(self.prices, dtype=float))
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "prices", px)
        if ts.size != px.size:
            raise ValueError("timestamps and prices must have equal length")
        if ts.size > 1 and np.any(np.diff(ts) < 0):
            raise ValueError("timestamps must be non-decreasing")
        if np.any(px <= 0):
            raise ValueError("prices must be strictly positive")
        if self.sizes is not None:
            s = _frozen(np.asarray(self.sizes, dtype=float))
            if s.size != px.size or np.any(s < 0):
                raise ValueError("sizes must align with prices and be non-negative")
            object.__setattr__(self, "sizes", s)
        if self.sides is not None:
            sd = np.asarray(self.sides, dtype="U7")
            if sd.size != px.size or not np.isin(sd, SIDES).all():
                raise ValueError(f"sides must align with prices and take values {SIDES}")
            object.__setattr__(self, "sides", _frozen(sd))
        object.__setattr__(self, "log_prices", _frozen(np.log(px)))

    def __len__(self) -> int:
        return self.prices.size

    def take(self, index: np.ndarray) -> "TickSeries":
        return TickSeries(
            instrument_id=self.instrument_id,
            timestamps=self.timestamps[index],
            prices=self.prices[index],
            sizes=None if self.sizes is None else self.sizes[index],
            sides=None if self.sides is None else self.sides[index],
        )


@dataclass(frozen=True)
class QuoteSeries:
    """Best bid/offer series; raw feeds may violate ask >= bid, cleaning
    enforces it afterwards."""

    instrument_id: str
    timestamps: np.ndarray
    bids: np.ndarray
    asks: np.ndarray
    bid_sizes: np.ndarray | None = None
    ask_sizes: np.ndarray | None = None
    conditions: np.ndarray | None = None

    def __post_init__(self):
        ts = _frozen(np.asarray(self.timestamps, dtype=np.int64))
        bid = _frozen(np.asarray(self.bids, dtype=float))
        ask = _frozen(np.asarray(self.asks, dtype=float))
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "bids", bid)
        object.__setattr__(self, "asks", ask)
        if not (ts.size == bid.size == ask.size):
            raise ValueError("timestamps, bids and asks must have equal length")
        if ts.size > 1 and np.any(np.diff(ts) < 0):
            raise ValueError("timestamps must be non-decreasing")
        for name in ("bid_sizes", "ask_sizes", "conditions"):
            v = getattr(self, name)
            if v is not None:
                arr = np.asarray(v)
                if arr.size != ts.size:
                    raise ValueError(f"{name} must align with timestamps")
                object.__setattr__(self, name, _frozen(arr))

    def __len__(self) -> int:
        return self.bids.size

    @property
    def mids(self) -> np.ndarray:
        return 0.5 * (self.bids + self.asks)

    @property
    def spreads(self) -> np.ndarray:
        return self.asks - self.bids

    def take(self, index: np.ndarray) -> "QuoteSeries":
        return QuoteSeries(
            instrument_id=self.instrument_id,
            timestamps=self.timestamps[index],
            bids=self.bids[index],
            asks=self.asks[index],
            bid_sizes=None if self.bid_sizes is None else self.bid_sizes[index],
            ask_sizes=None if self.ask_sizes is None else self.ask_sizes[index],
            conditions=None if self.conditions is None else self.conditions[index],
        )


def _read_table(path: str, schema: SchemaSpec) -> pd.DataFrame:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return pd.read_csv(path, sep=schema.delimiter, dtype=str, keep_default_na=False, skipinitialspace=True)


def _parse_timestamps(raw: pd.Series, schema: SchemaSpec) -> np.ndarray:
    if schema.timestamp_kind == "millis":
        return pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    if schema.timestamp_kind == "clock":
        dt = pd.to_datetime(raw, format="mixed", errors="coerce")
    else:
        dt = pd.to_datetime(raw, errors="coerce")
    ms = (dt - dt.dt.normalize()) / pd.Timedelta(milliseconds=1)
    return ms.to_numpy(dtype=float)


def _repair_clock(ts: np.ndarray, schema: SchemaSpec, order_payload: list[np.ndarray]):
    if ts.size > 1:
        regress = np.maximum.accumulate(ts) - ts
        worst = int(regress.max())
        if worst > schema.max_regression_ms:
            raise ParseError(
                f"timestamp regression of {worst} ms exceeds tolerance {schema.max_regression_ms} ms"
            )
        if worst > 0:
            order = np.argsort(ts, kind="stable")
            ts = ts[order]
            order_payload[:] = [a[order] for a in order_payload]
    return ts, order_payload


def parse_ticks(path: str, schema: SchemaSpec, instrument_id: str | None = None):
    """Parse a delimited trade file into a TickSeries.

    Rows whose mapped fields do not parse (bad numbers, bad clocks,
    non-positive prices) are skipped and counted.  Returns
    (series, skipped_rows).  Raises ParseError when nothing parses or
    the clock runs backwards beyond the schema tolerance.
    """
    df = _read_table(path, schema)
    for col in (schema.timestamp, schema.price):
        if col not in df.columns:
            raise ParseError(f"missing column {col!r} in {path}")
    ts = _parse_timestamps(df[schema.timestamp], schema)
    px = pd.to_numeric(df[schema.price], errors="coerce").to_numpy(dtype=float)
    ok = np.isfinite(ts) & np.isfinite(px) & (px > 0)
    sz = None
    if schema.size is not None and schema.size in df.columns:
        sz = pd.to_numeric(df[schema.size], errors="coerce").to_numpy(dtype=float)
        ok &= np.isfinite(sz) & (sz >= 0)
    sides = None
    if schema.side is not None and schema.side in df.columns:
        sides = np.array([_SIDE_ALIASES.get(s.strip().lower(), "unknown") for s in df[schema.side]], dtype="U7")
    skipped = int((~ok).sum())
    if not ok.any():
        raise ParseError(f"zero parseable rows in {path} ({skipped} skipped)")
    ts = np.round(ts[ok]).astype(np.int64)
    payload = [px[ok]] + ([sz[ok]] if sz is not None else []) + ([sides[ok]] if sides is not None else [])
    ts, payload = _repair_clock(ts, schema, payload)
    px = payload[0]
    sz = payload[1] if sz is not None else None
    sides = payload[-1] if sides is not None else None
    name = instrument_id or os.path.splitext(os.path.basename(path))[0]
    return TickSeries(name, ts, px, sz, sides), skipped


def parse_quotes(path: str, schema: SchemaSpec, instrument_id: str | None = None):
    """Parse a delimited quote file into a QuoteSeries; mirrors parse_ticks."""
    df = _read_table(path, schema)
    for col in (schema.timestamp, schema.bid, schema.ask):
        if col not in df.columns:
            raise ParseError(f"missing column {col!r} in {path}")
    ts = _parse_timestamps(df[schema.timestamp], schema)
    bid = pd.to_numeric(df[schema.bid], errors="coerce").to_numpy(dtype=float)
    ask = pd.to_numeric(df[schema.ask], errors="coerce").to_numpy(dtype=float)
    ok = np.isfinite(ts) & np.isfinite(bid) & np.isfinite(ask)
    cond = None
    if schema.condition is not None and schema.condition in df.columns:
        cond = df[schema.condition].to_numpy(dtype="U16")
    skipped = int((~ok).sum())
    if not ok.any():
        raise ParseError(f"zero parseable rows in {path} ({skipped} skipped)")
    ts = np.round(ts[ok]).astype(np.int64)
    payload = [bid[ok], ask[ok]] + ([cond[ok]] if cond is not None else [])
    ts, payload = _repair_clock(ts, schema, payload)
    name = instrument_id or os.path.splitext(os.path.basename(path))[0]
    return (
        QuoteSeries(
            name,
            ts,
            payload[0],
            payload[1],
            conditions=payload[2] if cond is not None else None,
        ),
        skipped,
    )


def write_ticks(series: TickSeries, path: str, delimiter: str = ",") -> None:
    """Serialize a TickSeries back to delimited text with a header row."""
    cols = {"timestamp": series.timestamps, "price": series.prices}
    if series.sizes is not None:
        cols["size"] = series.sizes
    if series.sides is not None:
        cols["side"] = series.sides
    pd.DataFrame(cols).to_csv(path, sep=delimiter, index=False, float_format="%.10g")


def aggregate_by_millisecond(series: TickSeries) -> TickSeries:
    """Collapse ticks sharing a millisecond stamp into one record.

    The aggregate price is the size-weighted mean when sizes are
    present (falling back to the last price if the sizes in a stamp sum
    to zero) and the last price in the stamp otherwise; sizes are
    summed.  Output timestamps are strictly increasing.  Idempotent.
    """
    if len(series) == 0:
        return series
    ts = series.timestamps
    uniq, start = np.unique(ts, return_index=True)
    if uniq.size == ts.size:
        return series
    bounds = np.append(start, ts.size)
    last = bounds[1:] - 1
    prices = series.prices[last].copy()
    sizes = None
    if series.sizes is not None:
        weighted = np.add.reduceat(series.prices * series.sizes, start)
        totals = np.add.reduceat(series.sizes, start)
        good = totals > 0
        prices[good] = weighted[good] / totals[good]
        sizes = totals
    sides = series.sides[last] if series.sides is not None else None
    return TickSeries(series.instrument_id, uniq, prices, sizes, sides)


def mid_quote(quotes: QuoteSeries) -> TickSeries:
    """Mid prices (bid+ask)/2 as a TickSeries; requires a cleaned book."""
    if np.any(quotes.asks < quotes.bids):
        raise ValueError("crossed quotes present; run cleaning before mid_quote")
    return TickSeries(quotes.instrument_id, quotes.timestamps, quotes.mids)


def clip_session(series: TickSeries, window: SessionWindow) -> TickSeries:
    """Restrict to the session window and rebase timestamps to its start.

    An empty result is allowed (and logged); order is preserved.
    """
    keep = (series.timestamps >= window.start_ms) & (series.timestamps <= window.end_ms)
    out = series.take(np.flatnonzero(keep))
    if len(out) == 0:
        log.warning("clip_session left no data for %s", series.instrument_id)
    return TickSeries(
        out.instrument_id,
        out.timestamps - window.start_ms,
        out.prices,
        out.sizes,
        out.sides,
    )
