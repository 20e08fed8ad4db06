"""Option volume imbalance construction under arbitrary filters.

For a cell (asset, day, participant class) the imbalance is

    OVI = (Up - Down) / (Up + Down),        0 / 0 := 0

where Up aggregates call buys plus put sells and Down call sells plus
put buys over the contracts passing the filter. Flows can be counted in
contracts, trades, or contract price times volume (nominal), restricted
by trade side, intent, exchange, an intraday cutoff slot, or a
feature-quantile bucket of the contracts.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import ndtr

from .errors import ValidationError
from .market.types import (
    MPC_LABELS, N_MPC, N_SLOTS, ContractKey, MarketDataset, Mpc, OptionSide,
)
from .pricing import _d1_d2, _phi, implied_volatility_grid


class FlowKind(enum.Enum):
    Volume = "vol"
    Trades = "trd"
    NominalVolume = "nom"


class SideRestriction(enum.Enum):
    Both = "both"
    BuyOnly = "buy"
    SellOnly = "sell"


class IntentRestriction(enum.Enum):
    Both = "both"
    OpenOnly = "open"
    CloseOnly = "close"


class Feature(enum.Enum):
    Delta = "delta"
    Gamma = "gamma"
    Theta = "theta"
    Vega = "vega"
    Rho = "rho"
    Moneyness = "moneyness"
    Maturity = "maturity"
    ImpliedVol = "iv"


N_FEATURE_BUCKETS = 4


@dataclass(frozen=True)
class FilterSpec:
    """Restriction applied to the transaction data before aggregation."""

    flow_kind: FlowKind = FlowKind.Volume
    side_restriction: SideRestriction = SideRestriction.Both
    intent_restriction: IntentRestriction = IntentRestriction.Both
    feature_bucket: tuple | None = None        # (Feature, bucket 1..4)
    dataset_restriction: frozenset | None = None   # exchange labels, None = all
    time_cutoff: int | None = None             # slot 1..39
    per_asset_buckets: bool = False
    rate: float = 0.0                          # risk-free rate for features

    def __post_init__(self):
        if self.feature_bucket is not None:
            feat, bucket = self.feature_bucket
            if not isinstance(feat, Feature):
                raise ValidationError(f"not a Feature: {feat!r}")
            if bucket not in range(1, N_FEATURE_BUCKETS + 1):
                raise ValidationError(f"feature bucket must be 1..4, got {bucket}")
        if self.time_cutoff is not None and not 1 <= self.time_cutoff <= N_SLOTS:
            raise ValidationError(f"time cutoff must be in 1..{N_SLOTS}")

    @property
    def label(self) -> str:
        feat = "-" if self.feature_bucket is None else \
            f"{self.feature_bucket[0].value}{self.feature_bucket[1]}"
        exch = "all" if self.dataset_restriction is None else \
            "+".join(sorted(self.dataset_restriction))
        cut = "eod" if self.time_cutoff is None else f"t{self.time_cutoff}"
        return "|".join([self.flow_kind.value, self.side_restriction.value,
                         self.intent_restriction.value, feat, exch, cut])


@dataclass(frozen=True)
class DirectionalFlows:
    up: float
    down: float


@dataclass
class SignalPanel:
    """A single signal per (asset, day); the unit the evaluation consumes."""

    values: np.ndarray          # (n_assets, n_days)
    assets: np.ndarray
    days: np.ndarray
    name: str = "signal"

    def aligned_with(self, other: "SignalPanel") -> bool:
        return (self.values.shape == other.values.shape
                and np.array_equal(self.assets, other.assets)
                and np.array_equal(self.days, other.days))


@dataclass
class OviPanel:
    """Imbalance values per (asset, day, MPC) under one filter."""

    values: np.ndarray          # (n_assets, n_days, n_mpc) in [-1, 1]
    zero_mask: np.ndarray       # True where total flow was zero
    total_flow: np.ndarray      # Up + Down per cell
    filter: FilterSpec
    assets: np.ndarray
    days: np.ndarray

    def for_mpc(self, mpc: Mpc) -> SignalPanel:
        j = MPC_LABELS.index(mpc.value)
        return SignalPanel(values=self.values[:, :, j], assets=self.assets,
                           days=self.days,
                           name=f"ovi[{mpc.value}|{self.filter.label}]")


def _row_mask(data: MarketDataset, table, filt: FilterSpec) -> np.ndarray:
    mask = np.ones(len(table), dtype=bool)
    if filt.dataset_restriction is not None:
        allowed = {lbl for lbl in filt.dataset_restriction}
        codes = [i for i, lbl in enumerate(table.exchange_labels) if lbl in allowed]
        mask &= np.isin(table.exch_idx, codes)
    if filt.side_restriction is SideRestriction.BuyOnly:
        mask &= table.side_idx == 0
    elif filt.side_restriction is SideRestriction.SellOnly:
        mask &= table.side_idx == 1
    if filt.intent_restriction is not IntentRestriction.Both:
        want = 0 if filt.intent_restriction is IntentRestriction.OpenOnly else 1
        mask &= table.intent_idx == want
        mm = MPC_LABELS.index(Mpc.MarketMaker.value)
        if (table.mpc_idx == mm).any():
            warnings.warn("Market Maker flows carry no open/close intent; the "
                          "Market Maker slice of this panel will be empty",
                          stacklevel=3)
    if filt.feature_bucket is not None:
        feat, bucket = filt.feature_bucket
        codes = feature_bucket_codes(data, feat, rate=filt.rate,
                                     per_asset=filt.per_asset_buckets)
        mask &= codes[table.contract_day_row] == bucket
    return mask


def _flow_values(data: MarketDataset, table, filt: FilterSpec) -> np.ndarray:
    if filt.flow_kind is FlowKind.Volume:
        return table.volume
    if filt.flow_kind is FlowKind.Trades:
        return table.trades
    price = data.contract_days["price"].to_numpy()
    return table.volume * price[table.contract_day_row]


def compute_ovi(data: MarketDataset, filt: FilterSpec | None = None) -> OviPanel:
    """Aggregate the imbalance panel for every (asset, day, MPC) cell."""
    filt = filt or FilterSpec()
    table = data.flows if filt.time_cutoff is None else \
        data.flows_at_slot(filt.time_cutoff)
    mask = _row_mask(data, table, filt)
    vals = _flow_values(data, table, filt)

    n, d = data.n_assets, data.n_days
    flat_size = n * d * N_MPC
    is_up = (table.cp_idx == 0) == (table.side_idx == 0)   # call-buy or put-sell
    flat = (table.asset_idx * d + table.day_idx) * N_MPC + table.mpc_idx
    sel_up = mask & is_up
    sel_dn = mask & ~is_up
    up = np.bincount(flat[sel_up], weights=vals[sel_up], minlength=flat_size)
    down = np.bincount(flat[sel_dn], weights=vals[sel_dn], minlength=flat_size)

    total = (up + down).reshape(n, d, N_MPC)
    diff = (up - down).reshape(n, d, N_MPC)
    zero = total == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        ovi = np.where(zero, 0.0, diff / np.where(zero, 1.0, total))
    return OviPanel(values=ovi, zero_mask=zero, total_flow=total, filter=filt,
                    assets=data.assets, days=data.days)


def open_t_ovi(data: MarketDataset, filt: FilterSpec) -> OviPanel:
    """Imbalance using only volume cumulated through `filt.time_cutoff`."""
    if filt.time_cutoff is None:
        raise ValidationError("open-t imbalance needs a time_cutoff")
    return compute_ovi(data, filt)


def directional_flows(data: MarketDataset, asset: str, day, mpc: Mpc,
                      filt: FilterSpec | None = None) -> DirectionalFlows:
    """Up/Down flow for one (asset, day, MPC) cell; empty selections give (0, 0)."""
    filt = filt or FilterSpec()
    table = data.flows if filt.time_cutoff is None else \
        data.flows_at_slot(filt.time_cutoff)
    mask = _row_mask(data, table, filt)
    ai = data.asset_index.get(asset)
    di = data.day_index.get(pd.Timestamp(day))
    if ai is None or di is None:
        return DirectionalFlows(0.0, 0.0)
    mask &= (table.asset_idx == ai) & (table.day_idx == di) & \
        (table.mpc_idx == MPC_LABELS.index(mpc.value))
    vals = _flow_values(data, table, filt)
    is_up = (table.cp_idx == 0) == (table.side_idx == 0)
    return DirectionalFlows(up=float(vals[mask & is_up].sum()),
                            down=float(vals[mask & ~is_up].sum()))


# -- feature buckets -----------------------------------------------------


def _contract_feature_values(data: MarketDataset, feature: Feature,
                             rate: float) -> np.ndarray:
    """Per contract-day feature values; NaN where not computable."""
    cd = data.contract_days
    tau = cd["maturity_days"].to_numpy() / 365.0
    if feature is Feature.Maturity:
        vals = cd["maturity_days"].to_numpy(np.float64).copy()
        vals[tau <= 0] = np.nan
        return vals
    iv = _contract_iv(data, rate)
    spot = cd["spot"].to_numpy()
    strike = cd["strike"].to_numpy()
    is_call = cd["call_put"].to_numpy() == "C"
    if feature is Feature.ImpliedVol:
        return iv
    with np.errstate(all="ignore"):
        if feature is Feature.Moneyness:
            mon = np.log(spot * np.exp(rate * tau) / strike) / (iv * np.sqrt(tau))
            return np.where(is_call, mon, -mon)
        d1, d2 = _d1_d2(spot, strike, tau, rate, iv)
        disc = np.exp(-rate * tau)
        if feature is Feature.Delta:
            return np.where(is_call, ndtr(d1), ndtr(d1) - 1.0)
        if feature is Feature.Gamma:
            return _phi(d1) / (spot * iv * np.sqrt(tau))
        if feature is Feature.Vega:
            return spot * _phi(d1) * np.sqrt(tau)
        if feature is Feature.Theta:
            decay = spot * _phi(d1) * iv / (2.0 * np.sqrt(tau))
            call_th = -decay - rate * strike * disc * ndtr(d2)
            put_th = -decay + rate * strike * disc * ndtr(-d2)
            return np.where(is_call, call_th, put_th)
        if feature is Feature.Rho:
            return np.where(is_call, strike * tau * disc * ndtr(d2),
                            -strike * tau * disc * ndtr(-d2))
    raise ValidationError(f"unknown feature {feature!r}")


def _contract_iv(data: MarketDataset, rate: float) -> np.ndarray:
    """Implied volatility per contract-day, cached on the dataset."""
    key = ("iv", float(rate))
    cached = data._day_feature_cache.get(key)
    if cached is not None:
        return cached
    cd = data.contract_days
    tau = cd["maturity_days"].to_numpy() / 365.0
    iv = implied_volatility_grid(
        cd["price"].to_numpy(), cd["spot"].to_numpy(), cd["strike"].to_numpy(),
        tau, rate, cd["call_put"].to_numpy() == "C")
    data._day_feature_cache[key] = iv
    data.quality["iv_failures"] = int(np.isnan(iv).sum())
    return iv


def _traded_mask(data: MarketDataset) -> np.ndarray:
    key = ("traded",)
    cached = data._day_feature_cache.get(key)
    if cached is not None:
        return cached
    mask = np.zeros(len(data.contract_days), dtype=bool)
    t = data.flows
    mask[t.contract_day_row[t.volume > 0]] = True
    data._day_feature_cache[key] = mask
    return mask


def feature_bucket_codes(data: MarketDataset, feature: Feature, rate: float = 0.0,
                         per_asset: bool = False) -> np.ndarray:
    """Quartile bucket (1..4) per contract-day row, 0 where excluded.

    Buckets split at the day's empirical 25/50/75% quantiles over traded
    contracts (market wide by default, per underlying when `per_asset`);
    boundary values fall into the lower bucket. Contracts whose implied
    volatility cannot be inverted are excluded from every feature's
    bucketing and counted under ``quality['iv_failures']``. Days with
    fewer than four usable contracts put everything in bucket 1 and are
    counted under ``quality['thin_bucket_days']``.
    """
    key = ("buckets", feature, float(rate), per_asset)
    cached = data._day_feature_cache.get(key)
    if cached is not None:
        return cached
    cd = data.contract_days
    vals = _contract_feature_values(data, feature, rate)
    usable = _traded_mask(data) & np.isfinite(vals) & \
        np.isfinite(_contract_iv(data, rate))
    codes = np.zeros(len(cd), dtype=np.int8)
    day_idx = cd["day_idx"].to_numpy()
    group = day_idx if not per_asset else \
        day_idx * data.n_assets + cd["asset_idx"].to_numpy()
    thin_days = 0
    rows_usable = np.flatnonzero(usable)
    order = np.argsort(group[rows_usable], kind="stable")
    sorted_rows = rows_usable[order]
    g_sorted = group[sorted_rows]
    bounds = np.r_[0, np.flatnonzero(np.diff(g_sorted)) + 1, len(g_sorted)]
    for b0, b1 in zip(bounds[:-1], bounds[1:]):
        if b0 == b1:
            continue
        rows = sorted_rows[b0:b1]
        v = vals[rows]
        if len(rows) < N_FEATURE_BUCKETS:
            codes[rows] = 1
            thin_days += 1
            continue
        q = np.quantile(v, [0.25, 0.5, 0.75])
        codes[rows] = 1 + (v > q[0]).astype(np.int8) + (v > q[1]) + (v > q[2])
    data._day_feature_cache[key] = codes
    data.quality["thin_bucket_days"] = data.quality.get("thin_bucket_days", 0) + thin_days
    return codes


def feature_buckets(data: MarketDataset, day, feature: Feature, rate: float = 0.0,
                    per_asset: bool = False) -> dict:
    """Map from ContractKey to bucket 1..4 for one trading day."""
    codes = feature_bucket_codes(data, feature, rate=rate, per_asset=per_asset)
    rows = data.contract_day_rows_for_day(day)
    cd = data.contract_days
    out = {}
    for r in rows:
        if codes[r] == 0:
            continue
        rec = cd.iloc[r]
        key = ContractKey(underlying=rec["underlying"],
                          option_side=OptionSide(rec["call_put"]),
                          strike=float(rec["strike"]),
                          expiry=pd.Timestamp(rec["expiry"]).date())
        out[key] = int(codes[r])
    return out


def write_ovi_csv(panel: OviPanel, path) -> None:
    """Export nonzero cells as date,asset,mpc,ovi,total_flow,filter_id rows."""
    ai, di, mi = np.nonzero(~panel.zero_mask)
    df = pd.DataFrame({
        "date": pd.to_datetime(panel.days[di]).strftime("%Y-%m-%d"),
        "asset": panel.assets[ai],
        "mpc": np.array(MPC_LABELS)[mi],
        "ovi": panel.values[ai, di, mi],
        "total_flow": panel.total_flow[ai, di, mi],
        "filter_id": panel.filter.label,
    })
    df = df.sort_values(["date", "asset", "mpc"], kind="stable")
    df.to_csv(path, index=False, float_format="%.12g")
