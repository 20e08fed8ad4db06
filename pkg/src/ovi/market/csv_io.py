"""Readers and writers for the three interchange CSV formats.

Intraday: date,slot,underlying,call_put,strike,expiry,mpc,side,intent,cum_volume,cum_trades
Daily:    date,underlying,call_put,strike,expiry,open,close,low,high,open_interest,total_volume
Equity:   date,asset,open,close

All files are UTF-8, comma separated, header required, ISO dates.
Parsers validate structure and report the first offending line; writers
round-trip parsed frames field for field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..errors import ParseError, ValidationError
from .types import (
    BUCKET_COLUMNS, CP_LABELS, EQUITY_COLUMNS, INTENT_LABELS, MPC_LABELS,
    N_SLOTS, SIDE_LABELS, SUMMARY_COLUMNS, normalize_buckets_frame,
    normalize_equities_frame, normalize_summaries_frame,
)

INTRADAY_HEADER = ("date", "slot", "underlying", "call_put", "strike", "expiry",
                   "mpc", "side", "intent", "cum_volume", "cum_trades")
DAILY_HEADER = tuple(SUMMARY_COLUMNS)
EQUITY_HEADER = tuple(EQUITY_COLUMNS)

FLOAT_FORMAT = "%.12g"


@dataclass
class IntradayCsvSchema:
    """Expected layout of an intraday report file.

    `exchange` labels every parsed row (the file format itself carries no
    exchange column); `strict` controls whether a cumulative decrease is
    an error or is clamped to the running maximum and counted in the
    data-quality report.
    """

    columns: tuple = INTRADAY_HEADER
    exchange: str = "X1"
    strict: bool = True
    label: str = field(default="", repr=False)


def _read_raw(source, expected_header, kind):
    # keep_default_na: the literal intent label "NA" must survive parsing
    df = pd.read_csv(source, dtype=str, skipinitialspace=True,
                     keep_default_na=False)
    got = tuple(c.strip() for c in df.columns)
    if got != tuple(expected_header):
        raise ParseError(f"{kind} header mismatch: expected {','.join(expected_header)}, "
                         f"got {','.join(got)}", line=1)
    return df


def _first_bad_line(mask: pd.Series) -> int:
    # +2: one for the header, one for 1-based numbering
    return int(np.flatnonzero(mask.to_numpy())[0]) + 2


def _numeric(df, col, kind, integer=False):
    out = pd.to_numeric(df[col], errors="coerce")
    bad = out.isna()
    if bad.any():
        raise ParseError(f"non-numeric {col} {df[col][bad].iloc[0]!r}",
                         line=_first_bad_line(bad))
    if integer:
        frac = out % 1 != 0
        if frac.any():
            raise ParseError(f"{col} must be an integer",
                             line=_first_bad_line(frac))
        out = out.astype("int64")
    return out


def _dates(df, col):
    out = pd.to_datetime(df[col], format="%Y-%m-%d", errors="coerce")
    bad = out.isna()
    if bad.any():
        raise ParseError(f"bad ISO date in {col}: {df[col][bad].iloc[0]!r}",
                         line=_first_bad_line(bad))
    return out


def _labels(df, col, allowed):
    vals = df[col].str.strip().str.upper()
    bad = ~vals.isin(allowed)
    if bad.any():
        raise ParseError(f"unknown {col} label {df[col][bad].iloc[0]!r}",
                         line=_first_bad_line(bad))
    return vals


def parse_intraday(source, schema: IntradayCsvSchema | None = None) -> pd.DataFrame:
    """Parse a cumulative intraday report into a bucket frame.

    Cumulative volume and trade counts must be non-decreasing in the slot
    index for each fixed (day, contract, mpc, side, intent) key; in strict
    mode a decrease raises ValidationError naming the key, otherwise the
    value is clamped to the running maximum and counted under
    ``attrs['quality']['clamped_rows']``.
    """
    schema = schema or IntradayCsvSchema()
    raw = _read_raw(source, schema.columns, "intraday")
    if not len(raw):
        df = normalize_buckets_frame(
            pd.DataFrame(columns=list(INTRADAY_HEADER)), exchange=schema.exchange)
        df.attrs["quality"] = {"clamped_rows": 0}
        return df

    out = pd.DataFrame({
        "date": _dates(raw, "date"),
        "slot": _numeric(raw, "slot", "intraday", integer=True),
        "underlying": raw["underlying"].str.strip(),
        "call_put": _labels(raw, "call_put", CP_LABELS),
        "strike": _numeric(raw, "strike", "intraday"),
        "expiry": _dates(raw, "expiry"),
        "mpc": _labels(raw, "mpc", MPC_LABELS),
        "side": _labels(raw, "side", SIDE_LABELS),
        "intent": _labels(raw, "intent", INTENT_LABELS),
        "cum_volume": _numeric(raw, "cum_volume", "intraday", integer=True),
        "cum_trades": _numeric(raw, "cum_trades", "intraday", integer=True),
    })
    bad_slot = (out["slot"] < 1) | (out["slot"] > N_SLOTS)
    if bad_slot.any():
        raise ParseError(f"slot outside 1..{N_SLOTS}", line=_first_bad_line(bad_slot))
    if (out["strike"] <= 0).any():
        raise ParseError("strike must be positive",
                         line=_first_bad_line(out["strike"] <= 0))
    neg = (out["cum_volume"] < 0) | (out["cum_trades"] < 0)
    if neg.any():
        raise ParseError("negative cumulative count", line=_first_bad_line(neg))

    key_cols = ["date", "underlying", "call_put", "strike", "expiry",
                "mpc", "side", "intent"]
    dup = out.duplicated(subset=key_cols + ["slot"])
    if dup.any():
        raise ParseError("duplicate (key, slot) row", line=_first_bad_line(dup))

    clamped = _enforce_monotone(out, key_cols, schema.strict)
    df = normalize_buckets_frame(out, exchange=schema.exchange)
    df.attrs["quality"] = {"clamped_rows": clamped}
    return df


def _enforce_monotone(out: pd.DataFrame, key_cols, strict: bool) -> int:
    """Check (or repair) cumulative monotonicity per key. Returns clamp count."""
    key_codes, _ = pd.factorize(
        pd.util.hash_pandas_object(out[key_cols], index=False), sort=False)
    order = np.lexsort((out["slot"].to_numpy(), key_codes))
    keys = pd.Series(key_codes[order])
    clamped = 0
    for col in ("cum_volume", "cum_trades"):
        vals = pd.Series(out[col].to_numpy()[order])
        run_max = vals.groupby(keys).cummax().to_numpy()
        dec = vals.to_numpy() < run_max
        if dec.any():
            if strict:
                first = order[np.flatnonzero(dec)[0]]
                row = out.iloc[first]
                raise ValidationError(
                    f"cumulative {col} decreases for key "
                    f"({pd.Timestamp(row['date']).date()}, {row['underlying']}, "
                    f"{row['call_put']}, {row['strike']}, "
                    f"{pd.Timestamp(row['expiry']).date()}, {row['mpc']}, "
                    f"{row['side']}, {row['intent']}) at slot {row['slot']}")
            clamped += int(dec.sum())
            fixed = np.empty_like(run_max)
            fixed[order] = run_max
            out[col] = fixed
    return clamped


def parse_daily_summary(source) -> pd.DataFrame:
    """Parse the end-of-day option summary report."""
    raw = _read_raw(source, DAILY_HEADER, "daily summary")
    if not len(raw):
        return normalize_summaries_frame(pd.DataFrame(columns=list(DAILY_HEADER)))
    out = pd.DataFrame({
        "date": _dates(raw, "date"),
        "underlying": raw["underlying"].str.strip(),
        "call_put": _labels(raw, "call_put", CP_LABELS),
        "strike": _numeric(raw, "strike", "daily"),
        "expiry": _dates(raw, "expiry"),
        "open": _numeric(raw, "open", "daily"),
        "close": _numeric(raw, "close", "daily"),
        "low": _numeric(raw, "low", "daily"),
        "high": _numeric(raw, "high", "daily"),
        "open_interest": _numeric(raw, "open_interest", "daily", integer=True),
        "total_volume": _numeric(raw, "total_volume", "daily", integer=True),
    })
    bad = (out["low"] > out[["open", "close"]].min(axis=1)) | \
          (out[["open", "close"]].max(axis=1) > out["high"])
    if bad.any():
        raise ValidationError(
            f"OHLC ordering violated at line {_first_bad_line(bad)}")
    if (out["open_interest"] < 0).any():
        raise ValidationError(
            f"negative open interest at line {_first_bad_line(out['open_interest'] < 0)}")
    dup = out.duplicated(subset=["date", "underlying", "call_put", "strike", "expiry"])
    if dup.any():
        raise ParseError("duplicate contract-day summary", line=_first_bad_line(dup))
    return normalize_summaries_frame(out)


def parse_equity_bars(source) -> pd.DataFrame:
    """Parse daily equity bars (adjusted open/close)."""
    raw = _read_raw(source, EQUITY_HEADER, "equity")
    if not len(raw):
        return normalize_equities_frame(pd.DataFrame(columns=list(EQUITY_HEADER)))
    out = pd.DataFrame({
        "date": _dates(raw, "date"),
        "asset": raw["asset"].str.strip(),
        "open": _numeric(raw, "open", "equity"),
        "close": _numeric(raw, "close", "equity"),
    })
    nonpos = (out["open"] <= 0) | (out["close"] <= 0)
    if nonpos.any():
        raise ValidationError(
            f"non-positive equity price at line {_first_bad_line(nonpos)}")
    dup = out.duplicated(subset=["asset", "date"])
    if dup.any():
        raise ParseError("duplicate (asset, day) bar", line=_first_bad_line(dup))
    return normalize_equities_frame(out)


def _iso(series: pd.Series) -> pd.Series:
    return pd.to_datetime(series).dt.strftime("%Y-%m-%d")


def write_intraday_csv(buckets: pd.DataFrame, path) -> None:
    df = buckets[BUCKET_COLUMNS[:-1]].copy()  # exchange is not part of the format
    df["date"] = _iso(df["date"])
    df["expiry"] = _iso(df["expiry"])
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def write_daily_csv(summaries: pd.DataFrame, path) -> None:
    df = summaries[SUMMARY_COLUMNS].copy()
    df["date"] = _iso(df["date"])
    df["expiry"] = _iso(df["expiry"])
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def write_equity_csv(equities: pd.DataFrame, path) -> None:
    df = equities[EQUITY_COLUMNS].copy()
    df["date"] = _iso(df["date"])
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
