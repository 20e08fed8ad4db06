"""Shared fixture builders for hand-constructed market datasets."""

from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from ovi.market.types import (
    MarketDataset, normalize_buckets_frame, normalize_equities_frame,
    normalize_summaries_frame,
)

BUCKET_FIELDS = ["date", "slot", "underlying", "call_put", "strike", "expiry",
                 "mpc", "side", "intent", "cum_volume", "cum_trades", "exchange"]
SUMMARY_FIELDS = ["date", "underlying", "call_put", "strike", "expiry",
                  "open", "close", "low", "high", "open_interest", "total_volume"]


def bucket_rows(rows):
    """Rows are tuples (date, slot, und, cp, strike, expiry, mpc, side,
    intent, cum_volume, cum_trades[, exchange])."""
    recs = []
    for r in rows:
        r = list(r)
        if len(r) == 11:
            r.append("X1")
        recs.append(dict(zip(BUCKET_FIELDS, r)))
    df = pd.DataFrame(recs)
    out = []
    for exch, sub in df.groupby("exchange", sort=True):
        out.append(normalize_buckets_frame(sub.drop(columns=["exchange"]),
                                           exchange=exch))
    return pd.concat(out, ignore_index=True)


def make_dataset(buckets, summaries=None, equities=None, benchmark="SPY",
                 default_price=2.0, default_oi=100):
    """Dataset from bucket tuples; summaries/equities filled in when omitted.

    Auto summaries carry open = close = default_price for every traded
    (day, contract); auto equities give every referenced asset (plus the
    benchmark) open 100 / close 101 bars on every referenced day.
    """
    bdf = bucket_rows(buckets) if not isinstance(buckets, pd.DataFrame) else buckets
    if summaries is None:
        cd = bdf[["date", "underlying", "call_put", "strike", "expiry"]] \
            .drop_duplicates().reset_index(drop=True)
        sdf = cd.assign(open=default_price, close=default_price,
                        low=default_price * 0.9, high=default_price * 1.1,
                        open_interest=default_oi, total_volume=0)
        sdf = normalize_summaries_frame(sdf)
    else:
        sdf = normalize_summaries_frame(pd.DataFrame(
            [dict(zip(SUMMARY_FIELDS, r)) for r in summaries]))
    if equities is None:
        days = sorted(set(bdf["date"]) | set(sdf["date"]))
        assets = sorted(set(bdf["underlying"]) | {benchmark})
        edf = pd.DataFrame([{"date": d, "asset": a, "open": 100.0, "close": 101.0}
                            for a in assets for d in days])
        edf = normalize_equities_frame(edf)
    else:
        edf = normalize_equities_frame(pd.DataFrame(
            [dict(zip(["date", "asset", "open", "close"], r)) for r in equities]))
    return MarketDataset(bdf, sdf, edf, benchmark=benchmark)


@pytest.fixture
def two_asset_day():
    """One day, two assets, one call contract each, simple volumes."""
    d = "2020-01-06"
    exp = "2020-03-20"
    rows = [
        (d, 39, "AAA", "C", 100.0, exp, "MM", "BUY", "NA", 60, 6),
        (d, 39, "AAA", "C", 100.0, exp, "MM", "SELL", "NA", 40, 4),
        (d, 39, "BBB", "P", 90.0, exp, "MM", "BUY", "NA", 30, 3),
    ]
    return make_dataset(rows)
