"""Approximate nominal trade flow between participant classes.

Within each 10-minute window and contract, buyer volume is matched to
seller volume proportionally to the sellers' share of that window
(bipartite proportional matching):

    NF_d[m1, m2] = sum_{contract, window} P * V_buy[m1] * V_sell[m2] / sum_m V_sell[m]

with P the contract's daily mid price, m1 the buyer and m2 the seller.
Windows with buyers but no sellers contribute nothing and are counted,
along with the buy/sell total mismatch, in the per-day diagnostics.
Call and put contracts are tallied separately; the daily pair of
matrices is normalized jointly to sum to one, and the cross-day
summary takes entrywise medians of those shares.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DomainError, ValidationError
from .market.types import MPC_LABELS, N_MPC, MarketDataset


@dataclass
class FlowMatrix:
    """Buyer-class x seller-class nominal flow, call and put variants."""

    call: np.ndarray
    put: np.ndarray
    day: object = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def combined(self) -> np.ndarray:
        return self.call + self.put

    def normalized(self) -> "FlowMatrix":
        total = self.combined.sum()
        if total <= 0:
            raise DomainError("cannot normalize a zero flow matrix")
        return FlowMatrix(call=self.call / total, put=self.put / total,
                          day=self.day, diagnostics=dict(self.diagnostics))


def _window_increments(b: pd.DataFrame, data: MarketDataset,
                       partition_intents: bool):
    """Per-(group, mpc, side) window volume increments for one day's rows.

    Groups are (exchange, contract-day, slot[, intent]); increments come
    from differencing consecutive cumulative reports, missing slots
    carrying the previous value. Negative differences (feed corrections)
    are clamped to zero and counted.
    """
    cd_lookup = data.contract_days.reset_index(names="_cd_row")
    b = b.merge(cd_lookup[["_cd_row"] + ["date", "underlying", "call_put",
                                         "strike", "expiry"]],
                on=["date", "underlying", "call_put", "strike", "expiry"],
                how="left")
    if b["_cd_row"].isna().any():
        raise ValidationError("bucket row without contract-day entry")
    key_cols = ["exchange", "_cd_row", "mpc", "side"]
    if partition_intents:
        key_cols.append("intent")
    series_key, _ = pd.factorize(
        pd.util.hash_pandas_object(b[key_cols], index=False), sort=False)
    order = np.lexsort((b["slot"].to_numpy(), series_key))
    skey = series_key[order]
    new_series = np.r_[True, skey[1:] != skey[:-1]]
    vals = b["cum_volume"].to_numpy(np.float64)[order]
    inc = np.diff(vals, prepend=0.0)
    inc[new_series] = vals[new_series]
    clamped = int((inc < 0).sum())
    return b, order, np.maximum(inc, 0.0), clamped


def _day_flow(b: pd.DataFrame, data: MarketDataset,
              partition_intents: bool) -> FlowMatrix:
    call = np.zeros((N_MPC, N_MPC))
    put = np.zeros((N_MPC, N_MPC))
    diags = {"zero_seller_windows": 0, "unmatched_buy_nominal": 0.0,
             "buy_volume": 0.0, "sell_volume": 0.0, "clamped_increments": 0}
    if not len(b):
        return FlowMatrix(call, put, diagnostics=diags)
    b, order, vol_inc, clamped = _window_increments(b, data, partition_intents)
    diags["clamped_increments"] = clamped

    cd_row = b["_cd_row"].to_numpy(np.int64)[order]
    slot = b["slot"].to_numpy(np.int64)[order]
    mpc = b["mpc"].cat.codes.to_numpy(np.int64)[order]
    side = b["side"].cat.codes.to_numpy(np.int64)[order]
    intent = b["intent"].cat.codes.to_numpy(np.int64)[order]
    exch = pd.factorize(b["exchange"].to_numpy()[order])[0]

    pool_parts = [exch, cd_row, slot] + ([intent] if partition_intents else [])
    pool_key = np.stack(pool_parts, axis=1)
    _, pool = np.unique(pool_key, axis=0, return_inverse=True)
    n_pools = pool.max() + 1 if len(pool) else 0

    buy_mat = np.bincount(pool * N_MPC + mpc, weights=np.where(side == 0, vol_inc, 0.0),
                          minlength=n_pools * N_MPC).reshape(n_pools, N_MPC)
    sell_mat = np.bincount(pool * N_MPC + mpc, weights=np.where(side == 1, vol_inc, 0.0),
                           minlength=n_pools * N_MPC).reshape(n_pools, N_MPC)

    pool_cd = np.zeros(n_pools, dtype=np.int64)
    pool_cd[pool] = cd_row
    price = data.contract_days["price"].to_numpy()[pool_cd]
    is_call = (data.contract_days["call_put"].to_numpy() == "C")[pool_cd]

    sell_tot = sell_mat.sum(axis=1)
    buy_tot = buy_mat.sum(axis=1)
    diags["buy_volume"] = float(buy_tot.sum())
    diags["sell_volume"] = float(sell_tot.sum())
    dead = (sell_tot == 0) & (buy_tot > 0)
    diags["zero_seller_windows"] = int(dead.sum())
    diags["unmatched_buy_nominal"] = float((price[dead] * buy_tot[dead]).sum())

    ok = sell_tot > 0
    for mat, pick in ((call, ok & is_call), (put, ok & ~is_call)):
        if pick.any():
            w = price[pick] / sell_tot[pick]
            mat += np.einsum("g,gm,gn->mn", w, buy_mat[pick], sell_mat[pick])
    return FlowMatrix(call, put, diagnostics=diags)


def daily_nominal_flow(data: MarketDataset, day,
                       partition_intents: bool = False) -> FlowMatrix:
    """Nominal flow matrix for one day (empty days give zero matrices)."""
    ts = pd.Timestamp(day)
    b = data.buckets[data.buckets["date"] == ts]
    out = _day_flow(b, data, partition_intents)
    out.day = ts
    return out


def median_flow_share(data: MarketDataset,
                      partition_intents: bool = False) -> FlowMatrix:
    """Entrywise median across days of the daily normalized shares."""
    calls, puts = [], []
    for ts, b in data.buckets.groupby("date", observed=True, sort=True):
        fm = _day_flow(b, data, partition_intents)
        if fm.combined.sum() <= 0:
            continue
        norm = fm.normalized()
        calls.append(norm.call)
        puts.append(norm.put)
    if not calls:
        raise DomainError("no day with nonzero flow")
    return FlowMatrix(call=np.median(np.stack(calls), axis=0),
                      put=np.median(np.stack(puts), axis=0),
                      diagnostics={"days_used": len(calls)})


def write_flow_csv(matrix: FlowMatrix, path) -> None:
    """Export as buyer_mpc,seller_mpc,call_put,share rows."""
    rows = []
    for cp, mat in (("C", matrix.call), ("P", matrix.put)):
        for i, buyer in enumerate(MPC_LABELS):
            for j, seller in enumerate(MPC_LABELS):
                rows.append({"buyer_mpc": buyer, "seller_mpc": seller,
                             "call_put": cp, "share": mat[i, j]})
    pd.DataFrame(rows).to_csv(path, index=False, float_format="%.12g")
