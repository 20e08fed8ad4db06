"""Quantile-ranked portfolios, bet weighting schemes and daily P&L.

The daily strategy P&L is

    P&L_d = sum_i b_{i,d} * f_{i,d} * sign(s_{i,d})

over the assets in the chosen quantile-rank group with nonzero signal,
with bet sizes b normalized to spend one dollar per trading day.

Magnitude ranks split the nonzero-signal assets into quintile buckets
QB1 (weakest 20%) .. QB5 (strongest 20%); group Qk pools QBk..QB5, so
Q1 holds every traded asset and Q5 only the strongest fifth.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..errors import DimensionError, ValidationError
from ..market.types import MPC_LABELS, MarketDataset, Mpc
from ..signals import SignalPanel, _contract_iv
from .returns import ReturnBasis, ReturnMode, ReturnSpan, ReturnsPanel, compute_returns

N_QUANTILE_BUCKETS = 5


@dataclass
class QuantileAssignment:
    """Per (asset, day) quintile bucket of |signal|; 0 marks no signal."""

    qb: np.ndarray            # (n_assets, n_days) int8 in 0..5
    assets: np.ndarray
    days: np.ndarray

    def in_bucket(self, b: int) -> np.ndarray:
        return self.qb == b

    def in_group(self, q: int) -> np.ndarray:
        """Membership of Qq = QBq u ... u QB5 (nested, Q1 = all traded)."""
        if not 1 <= q <= N_QUANTILE_BUCKETS:
            raise ValidationError(f"quantile group must be 1..5, got {q}")
        return self.qb >= q


def quantile_groups(signals: SignalPanel) -> QuantileAssignment:
    """Rank assets by |signal| per day into quintile buckets.

    Ties are broken by asset order (stable sort), so the assignment is
    deterministic and independent of input permutation history.
    """
    mag = np.abs(signals.values)
    n, d = mag.shape
    qb = np.zeros((n, d), dtype=np.int8)
    for day in range(d):
        nz = np.flatnonzero(mag[:, day] > 0)
        if len(nz) == 0:
            continue
        order = nz[np.argsort(mag[nz, day], kind="stable")]
        ranks = np.arange(len(order))
        qb[order, day] = 1 + (ranks * N_QUANTILE_BUCKETS) // len(order)
    return QuantileAssignment(qb=qb, assets=signals.assets, days=signals.days)


class BetKind(enum.Enum):
    Uniform = "uniform"
    Imbalance = "imbalance"
    Volume = "volume"
    NominalVolume = "nominal_volume"
    RelativeVolume = "relative_volume"
    IvVolume = "iv_volume"


@dataclass(frozen=True)
class BetScheme:
    """Raw bet-size rule; sizes are renormalized to one dollar per day.

    `mpc` restricts the volume aggregates to one participant class
    (None pools all classes, which is also the published form of the
    IV-volume rule). `iv_cap` is the cap inside log(1 + min(iv, cap)).
    """

    kind: BetKind = BetKind.Uniform
    mpc: Mpc | None = None
    iv_cap: float = 2.0
    rate: float = 0.0

    @property
    def label(self) -> str:
        suffix = "" if self.mpc is None else f"[{self.mpc.value}]"
        return self.kind.value + suffix


@dataclass
class PnlSeries:
    """Daily strategy P&L with its bet ledger."""

    daily: np.ndarray          # (n_days - 1,)
    bet_totals: np.ndarray     # dollars spent per day (1 or 0)
    n_positions: np.ndarray
    days: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.daily)


def _volume_aggregate(data: MarketDataset, scheme: BetScheme) -> np.ndarray:
    """Per (asset, day) raw liquidity measure for the volume-based schemes."""
    t = data.flows
    mask = np.ones(len(t), dtype=bool)
    if scheme.mpc is not None:
        mask &= t.mpc_idx == MPC_LABELS.index(scheme.mpc.value)
    flat = t.asset_idx * data.n_days + t.day_idx
    size = data.n_assets * data.n_days
    cd = data.contract_days
    if scheme.kind is BetKind.Volume:
        vals = t.volume
    elif scheme.kind is BetKind.NominalVolume:
        vals = t.volume * cd["price"].to_numpy()[t.contract_day_row]
    elif scheme.kind is BetKind.RelativeVolume:
        oi = cd["open_interest"].to_numpy(np.float64)[t.contract_day_row]
        skip = oi <= 0
        data.quality["relative_volume_zero_oi_rows"] = int((skip & mask).sum())
        mask &= ~skip
        vals = t.volume / np.where(skip, 1.0, oi)
    elif scheme.kind is BetKind.IvVolume:
        iv = _contract_iv(data, scheme.rate)[t.contract_day_row]
        skip = ~np.isfinite(iv)
        data.quality["iv_volume_failed_iv_rows"] = int((skip & mask).sum())
        mask &= ~skip
        vals = np.log1p(np.minimum(iv, scheme.iv_cap)) * t.volume
    else:
        raise ValidationError(f"no volume aggregate for {scheme.kind}")
    agg = np.bincount(flat[mask], weights=vals[mask], minlength=size)
    agg = agg.reshape(data.n_assets, data.n_days)
    if scheme.kind in (BetKind.Volume, BetKind.NominalVolume, BetKind.RelativeVolume):
        agg = np.log1p(agg)
    return agg


def raw_bet_weights(signals: SignalPanel, data: MarketDataset | None,
                    scheme: BetScheme) -> np.ndarray:
    """Unnormalized b' per (asset, day) before group masking."""
    if scheme.kind is BetKind.Uniform:
        return np.ones_like(signals.values)
    if scheme.kind is BetKind.Imbalance:
        return np.abs(signals.values)
    if data is None:
        raise ValidationError(f"{scheme.kind} weighting needs the market data")
    if not np.array_equal(signals.assets, data.assets):
        raise DimensionError("signal panel not aligned with dataset assets")
    return _volume_aggregate(data, scheme)[:, :signals.values.shape[1]]


def bet_sizes(signals: SignalPanel, data: MarketDataset | None,
              scheme: BetScheme, day) -> dict:
    """Normalized bet per traded asset (nonzero signal) for one day."""
    hits = np.flatnonzero(pd.to_datetime(signals.days) == pd.Timestamp(day))
    if len(hits) == 0:
        raise ValidationError(f"day {day} not in the signal panel")
    di = int(hits[0])
    w = raw_bet_weights(signals, data, scheme)[:, di]
    w = np.where(signals.values[:, di] != 0.0, w, 0.0)
    total = w.sum()
    if total <= 0:
        return {}
    return {a: w[i] / total for i, a in enumerate(signals.assets) if w[i] > 0}


def pnl_series(signals: SignalPanel, returns: ReturnsPanel, scheme: BetScheme,
               group: int = 1, data: MarketDataset | None = None,
               assignment: QuantileAssignment | None = None) -> PnlSeries:
    """Daily P&L of the sign-following strategy on quantile group Qk.

    Days where the group trades nothing contribute zero and stay in the
    vector, so Sharpe denominators always run over all D-1 days.
    """
    d_ret = returns.values.shape[1]
    if not np.array_equal(signals.assets, returns.assets) or \
            signals.values.shape[1] < d_ret or \
            not np.array_equal(signals.days[:d_ret], returns.days):
        raise DimensionError("signal and return panels are not aligned")
    s = signals.values[:, :d_ret]
    assignment = assignment or quantile_groups(signals)
    member = assignment.in_group(group)[:, :d_ret] & (s != 0.0) & returns.mask
    w = raw_bet_weights(signals, data, scheme)[:, :d_ret]
    w = np.where(member, w, 0.0)
    totals = w.sum(axis=0)
    traded = totals > 0
    b = w / np.where(traded, totals, 1.0)
    daily = (b * returns.values * np.sign(s)).sum(axis=0)
    daily = np.where(traded, daily, 0.0)
    return PnlSeries(daily=daily,
                     bet_totals=traded.astype(float),
                     n_positions=(w > 0).sum(axis=0),
                     days=returns.days,
                     meta={"signal": signals.name, "scheme": scheme.label,
                           "mode": returns.mode.label, "group": f"Q{group}"})


def holding_period_pnl(signals: SignalPanel, data: MarketDataset,
                       scheme: BetScheme, group: int, h: int,
                       basis: ReturnBasis = ReturnBasis.ExcessMarket) -> PnlSeries:
    """P&L with an h-day holding period.

    Each day-d bet earns the sum of the next h close-to-close returns
    starting with day d's. Horizons running past the data are truncated
    to the available days (with a warning); h = 1 reduces to the plain
    close-to-close strategy.
    """
    if h < 1:
        raise ValidationError(f"holding period must be >= 1, got {h}")
    rets = compute_returns(data, ReturnMode(ReturnSpan.CL_tmCL, basis))
    vals = np.where(rets.mask, rets.values, 0.0)
    n, d_ret = vals.shape
    if h > 1:
        csum = np.concatenate([np.zeros((n, 1)), np.cumsum(vals, axis=1)], axis=1)
        upper = np.minimum(np.arange(d_ret) + h, d_ret)
        summed = csum[:, upper] - csum[:, :-1]
        if h > 1 and d_ret >= 1:
            warnings.warn(f"holding period {h} truncated on the last "
                          f"{min(h - 1, d_ret)} day(s)", stacklevel=2)
        rets = ReturnsPanel(values=summed, mask=rets.mask, assets=rets.assets,
                            days=rets.days, mode=rets.mode)
    out = pnl_series(signals, rets, scheme, group, data=data)
    out.meta["holding_period"] = h
    return out
