"""Synthetic market generator with planted next-day predictability.

Equity prices follow a geometric random walk around a benchmark path.
For every (asset, day, participant class) cell a target imbalance value
is drawn on [-1, 1]; its sign agrees with the sign of the asset's
next-day overnight excess return with probability (1 + rho_m) / 2, so
the sign correlation between target and realized excess return is
rho_m in expectation. Cell volumes are then realized as

    Up   = round(V (1 + o) / 2)      (call buys + put sells)
    Down = V - Up                    (call sells + put buys)

and spread over the asset's listed contracts. Option summary prices are
generated from the pricing model at a per-contract true volatility, so
implied-volatility inversion on synthetic data recovers known values.

Everything is drawn from a single named sub-stream of the root seed;
the same config and seed always produce identical datasets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..errors import ConfigError
from ..pricing import _price_raw
from ..rngutil import substream
from .types import (
    CP_LABELS, INTENT_LABELS, MPC_LABELS, N_SLOTS, SIDE_LABELS,
    MarketDataset, Mpc,
)

DEFAULT_PARTICIPATION = {
    Mpc.Firm: 0.25, Mpc.Broker: 0.5, Mpc.MarketMaker: 0.9,
    Mpc.Customer: 0.85, Mpc.ProfessionalCustomer: 0.15,
}
DEFAULT_VOLUME_SCALE = {
    Mpc.Firm: 0.3, Mpc.Broker: 0.6, Mpc.MarketMaker: 2.0,
    Mpc.Customer: 1.6, Mpc.ProfessionalCustomer: 0.15,
}


@dataclass
class SynthConfig:
    """Knobs of the synthetic market; defaults give a small liquid market."""

    n_assets: int = 20
    n_days: int = 60
    seed: int = 0
    rho: dict = field(default_factory=dict)            # Mpc -> [-1, 1]
    base_volume: float = 60.0                          # Poisson mean per cell
    participation: dict = field(default_factory=lambda: dict(DEFAULT_PARTICIPATION))
    volume_scale: dict = field(default_factory=lambda: dict(DEFAULT_VOLUME_SCALE))
    contracts_per_asset: int = 2                       # half calls, half puts
    magnitude_beta: tuple = (2.0, 2.0)
    fixed_magnitude: float | None = None               # overrides the Beta draw
    market_overnight_vol: float = 0.008
    overnight_vol: float = 0.01                        # asset-specific excess
    market_intraday_vol: float = 0.009
    intraday_vol: float = 0.012
    open_fraction: float = 0.7                         # open-intent share, non-MM
    trade_size_mean: float = 4.0
    rate: float = 0.0
    iv_log_mean: float = float(np.log(0.3))
    iv_log_sd: float = 0.35
    strike_band: tuple = (0.85, 1.15)
    expiry_days: tuple = (20, 250)
    oi_mean: float = 300.0
    slots: tuple = (N_SLOTS,)                          # emitted report slots
    start: str = "2015-01-02"
    benchmark: str = "SPY"
    exchange: str = "X1"
    mpcs: tuple = tuple(Mpc)

    def validate(self):
        if self.n_assets < 2 or self.n_days < 2:
            raise ConfigError("need at least 2 assets and 2 days")
        for m, r in self.rho.items():
            if abs(r) > 1:
                raise ConfigError(f"planted correlation for {m} outside [-1, 1]: {r}")
        if not self.slots or sorted(self.slots)[-1] != N_SLOTS:
            raise ConfigError(f"slots must end with the closing report {N_SLOTS}")
        if any(s < 1 or s > N_SLOTS for s in self.slots):
            raise ConfigError(f"slots must lie in 1..{N_SLOTS}")
        if not 0.0 <= self.open_fraction <= 1.0:
            raise ConfigError("open_fraction must be in [0, 1]")
        if self.contracts_per_asset < 1:
            raise ConfigError("need at least one contract per asset")


def _split_binomial_chain(rng, totals, k):
    """Split integer totals uniformly into k non-negative parts."""
    parts = []
    remaining = totals.copy()
    for c in range(k - 1):
        take = rng.binomial(remaining, 1.0 / (k - c))
        parts.append(take)
        remaining = remaining - take
    parts.append(remaining)
    return parts


def generate_synthetic_market(cfg: SynthConfig) -> MarketDataset:
    """Build a MarketDataset with the planted sign structure of `cfg`."""
    cfg.validate()
    rng = substream(cfg.seed, "synth")
    n, d = cfg.n_assets, cfg.n_days
    mpcs = list(cfg.mpcs)
    m = len(mpcs)
    days = pd.bdate_range(cfg.start, periods=d)
    day_vals = days.to_numpy()
    assets = np.array([f"A{i:04d}" for i in range(n)])

    # -- equity walk ----------------------------------------------------
    mkt_on = rng.normal(0.0, cfg.market_overnight_vol, d)
    mkt_in = rng.normal(0.0, cfg.market_intraday_vol, d)
    exc_on = np.clip(rng.normal(0.0, cfg.overnight_vol, (n, d)), -0.4, 0.4)
    exc_in = np.clip(rng.normal(0.0, cfg.intraday_vol, (n, d)), -0.4, 0.4)
    on = mkt_on[None, :] + exc_on          # overnight into day t (t >= 1)
    intra = mkt_in[None, :] + exc_in
    open0 = rng.uniform(20.0, 200.0, n)

    def _paths(open_start, on_ret, in_ret):
        factors = np.ones_like(on_ret)
        factors[..., 1:] = (1.0 + on_ret[..., 1:]) * (1.0 + in_ret[..., :-1])
        opens = open_start[..., None] * np.cumprod(factors, axis=-1)
        closes = opens * (1.0 + in_ret)
        return opens, closes

    a_open, a_close = _paths(open0, on, intra)
    b_open, b_close = _paths(np.array([100.0]), mkt_on[None, :], mkt_in[None, :])

    equities = pd.DataFrame({
        "date": np.concatenate([np.tile(day_vals, n), day_vals]),
        "asset": np.concatenate([np.repeat(assets, d), np.repeat(cfg.benchmark, d)]),
        "open": np.concatenate([a_open.ravel(), b_open.ravel()]),
        "close": np.concatenate([a_close.ravel(), b_close.ravel()]),
    })

    # -- planted imbalance targets ---------------------------------------
    # day-d target predicts the overnight excess move into day d+1
    next_exc = np.empty((n, d))
    next_exc[:, :-1] = exc_on[:, 1:]
    next_exc[:, -1] = 0.0
    target_sign = np.sign(next_exc)
    rand_sign = rng.choice(np.array([-1.0, 1.0]), size=(n, d, m))

    rho_vec = np.array([float(cfg.rho.get(mp, 0.0)) for mp in mpcs])
    agree = rng.random((n, d, m)) < (1.0 + rho_vec[None, None, :]) / 2.0
    sign_o = np.where(agree, 1.0, -1.0) * target_sign[:, :, None]
    sign_o = np.where(sign_o == 0.0, rand_sign, sign_o)

    if cfg.fixed_magnitude is not None:
        mag = np.full((n, d, m), float(cfg.fixed_magnitude))
    else:
        a, b = cfg.magnitude_beta
        mag = np.abs(2.0 * rng.beta(a, b, (n, d, m)) - 1.0)
    target_ovi = sign_o * mag

    # -- cell volumes -----------------------------------------------------
    scale = np.array([cfg.volume_scale.get(mp, 1.0) for mp in mpcs])
    part = rng.random((n, d, m)) < np.array(
        [cfg.participation.get(mp, 1.0) for mp in mpcs])[None, None, :]
    vol = rng.poisson(cfg.base_volume * scale[None, None, :], (n, d, m))
    vol = np.where(part, vol, 0)
    up = np.rint(vol * (1.0 + target_ovi) / 2.0).astype(np.int64)
    down = vol - up

    # -- contracts ---------------------------------------------------------
    c = cfg.contracts_per_asset
    n_calls = (c + 1) // 2
    n_puts = c - n_calls
    spot = 0.5 * (a_open + a_close)                               # (n, d)
    strike_mult = rng.uniform(*cfg.strike_band, (n, d, c))
    expiry_off = rng.integers(cfg.expiry_days[0], cfg.expiry_days[1] + 1, (n, d, c))
    sigma_true = rng.lognormal(cfg.iv_log_mean, cfg.iv_log_sd, (n, d, c))
    oi = rng.poisson(cfg.oi_mean, (n, d, c)) + 1

    is_call_c = np.zeros(c, dtype=bool)
    is_call_c[:n_calls] = True
    strike = spot[:, :, None] * strike_mult
    tau = expiry_off / 365.0
    with np.errstate(all="ignore"):
        px = _price_raw(spot[:, :, None], strike, tau, cfg.rate, sigma_true,
                        is_call_c[None, None, :])
    px = np.maximum(px, 0.01)

    full_assets = np.sort(np.append(assets, cfg.benchmark))
    asset_pos = np.searchsorted(full_assets, assets)

    sum_date = np.broadcast_to(day_vals[None, :, None], (n, d, c)).ravel()
    sum_ai = np.broadcast_to(np.arange(n)[:, None, None], (n, d, c)).ravel()
    sum_cp = np.broadcast_to((~is_call_c).astype(np.int8), (n, d, c)).ravel()
    summaries = pd.DataFrame({
        "date": sum_date,
        "underlying": pd.Categorical.from_codes(asset_pos[sum_ai], full_assets),
        "call_put": pd.Categorical.from_codes(sum_cp, CP_LABELS),
        "strike": strike.ravel(),
        "expiry": sum_date + expiry_off.ravel().astype("timedelta64[D]"),
        "open": px.ravel(),
        "close": px.ravel(),
        "low": px.ravel() * 0.99,
        "high": px.ravel() * 1.01,
        "open_interest": oi.ravel().astype("int64"),
        "total_volume": np.zeros(n * d * c, dtype="int64"),
    })

    # -- route cell volumes onto contract legs -----------------------------
    cell = np.nonzero(vol > 0)
    ai, di, mi = (x.astype(np.int64) for x in cell)
    up_c, down_c = up[cell], down[cell]
    if n_puts == 0:
        call_buy, put_sell = up_c, np.zeros_like(up_c)
        call_sell, put_buy = down_c, np.zeros_like(down_c)
    else:
        call_buy = rng.binomial(up_c, 0.5)
        put_sell = up_c - call_buy
        call_sell = rng.binomial(down_c, 0.5)
        put_buy = down_c - call_sell

    leg_rows = []  # (asset_idx, day_idx, mpc_idx, contract_idx, side, volume)
    for side, leg_vol, pool_start, pool_len in (
            ("BUY", call_buy, 0, n_calls), ("SELL", put_sell, n_calls, n_puts),
            ("SELL", call_sell, 0, n_calls), ("BUY", put_buy, n_calls, n_puts)):
        if pool_len == 0:
            continue
        parts = ([leg_vol] if pool_len == 1
                 else _split_binomial_chain(rng, leg_vol, pool_len))
        for j, part_vol in enumerate(parts):
            keep = part_vol > 0
            leg_rows.append((ai[keep], di[keep], mi[keep],
                             np.full(keep.sum(), pool_start + j, dtype=np.int64),
                             side, part_vol[keep]))

    r_ai = np.concatenate([r[0] for r in leg_rows])
    r_di = np.concatenate([r[1] for r in leg_rows])
    r_mi = np.concatenate([r[2] for r in leg_rows])
    r_ci = np.concatenate([r[3] for r in leg_rows])
    r_side = np.concatenate([np.full(len(r[0]), 0 if r[4] == "BUY" else 1,
                                     dtype=np.int8) for r in leg_rows])
    r_vol = np.concatenate([r[5] for r in leg_rows]).astype(np.int64)

    # intent split: Market Maker rows stay unspecified, others split open/close
    mpc_codes = np.array([MPC_LABELS.index(mp.value) for mp in mpcs])
    is_mm = np.array([mp is Mpc.MarketMaker for mp in mpcs])[r_mi]
    open_part = np.where(is_mm, r_vol, rng.binomial(r_vol, cfg.open_fraction))
    close_part = r_vol - open_part

    seg_ai, seg_di, seg_mi, seg_ci, seg_side, seg_vol, seg_intent = [], [], [], [], [], [], []
    keep = open_part > 0
    seg_ai.append(r_ai[keep]); seg_di.append(r_di[keep]); seg_mi.append(r_mi[keep])
    seg_ci.append(r_ci[keep]); seg_side.append(r_side[keep]); seg_vol.append(open_part[keep])
    seg_intent.append(np.where(is_mm[keep], 2, 0).astype(np.int8))
    keep = (close_part > 0) & ~is_mm
    seg_ai.append(r_ai[keep]); seg_di.append(r_di[keep]); seg_mi.append(r_mi[keep])
    seg_ci.append(r_ci[keep]); seg_side.append(r_side[keep]); seg_vol.append(close_part[keep])
    seg_intent.append(np.full(keep.sum(), 1, dtype=np.int8))

    f_ai = np.concatenate(seg_ai)
    f_di = np.concatenate(seg_di)
    f_mi = np.concatenate(seg_mi)
    f_ci = np.concatenate(seg_ci)
    f_side = np.concatenate(seg_side)
    f_vol = np.concatenate(seg_vol)
    f_intent = np.concatenate(seg_intent)
    f_trades = np.maximum(1, np.rint(f_vol / cfg.trade_size_mean)).astype(np.int64)

    flat_cd = (f_ai * d + f_di) * c + f_ci
    total_volume = np.bincount(flat_cd, weights=f_vol, minlength=n * d * c)
    summaries["total_volume"] = total_volume.astype(np.int64)

    slots_sorted = tuple(sorted(cfg.slots))
    frames = []
    if slots_sorted == (N_SLOTS,):
        frames.append(_bucket_frame(cfg, day_vals, full_assets, asset_pos, f_ai,
                                    f_di, f_mi, f_ci, f_side, f_intent, f_vol,
                                    f_trades,
                                    np.full(len(f_vol), N_SLOTS, dtype=np.int16),
                                    strike, expiry_off, mpc_codes, is_call_c))
        preagg = True
    else:
        win_vol = np.stack(_split_binomial_chain(rng, f_vol, N_SLOTS), axis=1)
        win_trd = np.ceil(win_vol / cfg.trade_size_mean).astype(np.int64)
        cum_vol = np.cumsum(win_vol, axis=1)
        cum_trd = np.cumsum(win_trd, axis=1)
        for s in slots_sorted:
            frames.append(_bucket_frame(cfg, day_vals, full_assets, asset_pos,
                                        f_ai, f_di, f_mi, f_ci, f_side, f_intent,
                                        cum_vol[:, s - 1], cum_trd[:, s - 1],
                                        np.full(len(f_vol), s, dtype=np.int16),
                                        strike, expiry_off, mpc_codes, is_call_c))
        preagg = False
    buckets = pd.concat(frames, ignore_index=True)

    flows_hint = None
    if preagg:
        flows_hint = buckets.drop(columns=["slot"]).rename(
            columns={"cum_volume": "volume", "cum_trades": "trades"})
        flows_hint["_cd_row"] = flat_cd

    ds = MarketDataset(buckets, summaries, equities, cfg.benchmark,
                       validate=False, preaggregated=preagg,
                       flows_hint=flows_hint)
    ds.synth_debug = {"target_ovi": target_ovi, "total_volume": vol,
                      "excess_overnight": exc_on, "mpcs": mpcs}
    return ds


def _bucket_frame(cfg, day_vals, full_assets, asset_pos, ai, di, mi, ci, side,
                  intent, cum_vol, cum_trd, slot, strike, expiry_off, mpc_codes,
                  is_call_c):
    n = len(asset_pos)
    d = len(day_vals)
    c = strike.shape[2]
    flat = (ai * d + di) * c + ci
    return pd.DataFrame({
        "date": day_vals[di],
        "slot": slot,
        "underlying": pd.Categorical.from_codes(asset_pos[ai], full_assets),
        "call_put": pd.Categorical.from_codes(
            (~is_call_c[ci]).astype(np.int8), CP_LABELS),
        "strike": strike.reshape(-1)[flat],
        "expiry": day_vals[di] + expiry_off.reshape(-1)[flat].astype("timedelta64[D]"),
        "mpc": pd.Categorical.from_codes(mpc_codes[mi].astype(np.int8), MPC_LABELS),
        "side": pd.Categorical.from_codes(side, SIDE_LABELS),
        "intent": pd.Categorical.from_codes(intent, INTENT_LABELS),
        "cum_volume": cum_vol.astype("int64"),
        "cum_trades": cum_trd.astype("int64"),
        "exchange": pd.Categorical.from_codes(
            np.zeros(len(ai), dtype=np.int8), [cfg.exchange]),
    })
