"""Quantile groups, bet schemes and the daily P&L identity."""

import numpy as np
import pytest

from conftest import make_dataset
from ovi.errors import DimensionError, DomainError
from ovi.evaluation import (
    BetKind, BetScheme, ReturnBasis, ReturnMode, ReturnSpan, bet_sizes,
    compute_returns, holding_period_pnl, pnl_series, quantile_groups,
)
from ovi.evaluation.portfolio import raw_bet_weights
from ovi.evaluation.returns import ReturnsPanel
from ovi.market import Mpc, OptionSide, SynthConfig, generate_synthetic_market
from ovi.pricing import BsInputs, bs_price
from ovi.signals import SignalPanel, compute_ovi

D1, EXP = "2020-01-06", "2020-03-20"


def panel_of(values, name="sig"):
    values = np.asarray(values, dtype=float)
    n, d = values.shape
    assets = np.array([f"A{i}" for i in range(n)])
    days = np.arange("2020-01-06", "2020-01-06", dtype="datetime64[D]")
    days = np.datetime64("2020-01-06") + np.arange(d)
    return SignalPanel(values=values, assets=assets, days=days, name=name)


def returns_of(values, mask=None):
    values = np.asarray(values, dtype=float)
    n, d = values.shape
    assets = np.array([f"A{i}" for i in range(n)])
    days = np.datetime64("2020-01-06") + np.arange(d)
    mask = np.ones_like(values, dtype=bool) if mask is None else mask
    return ReturnsPanel(values=values, mask=mask, assets=assets, days=days,
                        mode=ReturnMode(ReturnSpan.CL_tmOP, ReturnBasis.Raw))


def test_quantile_buckets_hand_ranking():
    mags = np.array([[0.05, 0.10, 0.15, 0.20, 0.25,
                      0.30, 0.35, 0.40, 0.45, 0.50]]).T   # 10 assets, 1 day
    qa = quantile_groups(panel_of(mags))
    assert qa.qb[:, 0].tolist() == [1, 1, 2, 2, 3, 3, 4, 4, 5, 5]
    # QB5 holds the top two magnitudes
    assert set(np.flatnonzero(qa.in_bucket(5)[:, 0])) == {8, 9}
    # Q1 membership is every nonzero-signal asset, and groups nest downward
    assert qa.in_group(1)[:, 0].all()
    for q in range(1, 5):
        assert np.all(qa.in_group(q + 1) <= qa.in_group(q))


def test_all_zero_signals_give_empty_buckets():
    qa = quantile_groups(panel_of(np.zeros((4, 3))))
    assert not qa.qb.any()
    assert not qa.in_group(1).any()


def test_uniform_bets_split_equally():
    sig = panel_of(np.array([[0.5], [-0.2], [0.1], [0.9], [0.0]]))
    sizes = bet_sizes(sig, None, BetScheme(), "2020-01-06")
    assert sizes == {"A0": 0.25, "A1": 0.25, "A2": 0.25, "A3": 0.25}


def test_imbalance_bets_normalize_magnitudes():
    sig = panel_of(np.array([[0.1], [-0.3]]))
    sizes = bet_sizes(sig, None, BetScheme(kind=BetKind.Imbalance), "2020-01-06")
    assert sizes["A0"] == pytest.approx(0.25)
    assert sizes["A1"] == pytest.approx(0.75)


def iv_dataset(sigma_true, volume=10):
    # option priced by the model at sigma_true; spot = equity mid = 100.5
    price = bs_price(BsInputs(100.5, 100.0, (np.datetime64(EXP) - np.datetime64(D1))
                              .astype(int) / 365.0, 0.0, sigma_true,
                              OptionSide.Call))
    rows = [(D1, 39, "AAA", "C", 100.0, EXP, "MM", "BUY", "NA", volume, 1)]
    summaries = [(D1, "AAA", "C", 100.0, EXP, price, price, price * 0.9,
                  price * 1.1, 50, volume)]
    return make_dataset(rows, summaries=summaries)


def test_iv_volume_scheme_caps_the_volatility():
    ds = iv_dataset(3.0)
    panel = compute_ovi(ds)
    sig = panel.for_mpc(Mpc.MarketMaker)
    w = raw_bet_weights(sig, ds, BetScheme(kind=BetKind.IvVolume))
    i = list(sig.assets).index("AAA")
    assert w[i, 0] == pytest.approx(np.log1p(2.0) * 10, rel=1e-6)
    low = iv_dataset(0.4)
    w_low = raw_bet_weights(compute_ovi(low).for_mpc(Mpc.MarketMaker), low,
                            BetScheme(kind=BetKind.IvVolume))
    j = list(low.assets).index("AAA")
    assert w_low[j, 0] == pytest.approx(np.log1p(0.4) * 10, rel=1e-5)


def test_relative_volume_skips_zero_open_interest():
    rows = [
        (D1, 39, "AAA", "C", 100.0, EXP, "MM", "BUY", "NA", 10, 1),
        (D1, 39, "AAA", "P", 90.0, EXP, "MM", "BUY", "NA", 20, 2),
    ]
    summaries = [
        (D1, "AAA", "C", 100.0, EXP, 2.0, 2.0, 1.9, 2.1, 40, 10),
        (D1, "AAA", "P", 90.0, EXP, 2.0, 2.0, 1.9, 2.1, 0, 20),   # zero OI
    ]
    ds = make_dataset(rows, summaries=summaries)
    sig = compute_ovi(ds).for_mpc(Mpc.MarketMaker)
    w = raw_bet_weights(sig, ds, BetScheme(kind=BetKind.RelativeVolume))
    i = list(sig.assets).index("AAA")
    assert w[i, 0] == pytest.approx(np.log1p(10 / 40), rel=1e-12)
    assert ds.quality["relative_volume_zero_oi_rows"] == 1


def test_volume_scheme_log_softening():
    rows = [(D1, 39, "AAA", "C", 100.0, EXP, "CUST", "BUY", "OPEN", 120, 12)]
    ds = make_dataset(rows)
    sig = compute_ovi(ds).for_mpc(Mpc.Customer)
    w = raw_bet_weights(sig, ds, BetScheme(kind=BetKind.Volume, mpc=Mpc.Customer))
    i = list(sig.assets).index("AAA")
    assert w[i, 0] == pytest.approx(np.log1p(120))
    other = raw_bet_weights(sig, ds, BetScheme(kind=BetKind.Volume, mpc=Mpc.Firm))
    assert other[i, 0] == 0.0


def test_pnl_single_asset_identity_and_antisymmetry():
    sig = panel_of(np.array([[0.4, -0.2]]))
    rets = returns_of(np.array([[0.02, 0.03]]))
    p = pnl_series(sig, rets, BetScheme(), group=1)
    np.testing.assert_allclose(p.daily, [0.02, -0.03], atol=1e-15)
    neg = pnl_series(panel_of(-sig.values), rets, BetScheme(), group=1)
    np.testing.assert_allclose(neg.daily, -p.daily, atol=1e-15)


def test_pnl_three_asset_hand_fixture():
    sig = panel_of(np.array([[0.5], [-0.3], [0.1]]))
    rets = returns_of(np.array([[0.01], [0.02], [-0.03]]))
    p = pnl_series(sig, rets, BetScheme(), group=1)
    hand = (0.01 - 0.02 - 0.03) / 3.0
    assert p.daily[0] == pytest.approx(hand, abs=1e-15)
    assert p.bet_totals[0] == 1.0
    assert p.n_positions[0] == 3


def test_positive_scaling_of_signals_changes_nothing():
    rng = np.random.default_rng(4)
    vals = rng.normal(0, 1, (6, 15))
    rets = returns_of(rng.normal(0, 0.01, (6, 15)))
    for scheme in (BetScheme(), BetScheme(kind=BetKind.Imbalance)):
        base = pnl_series(panel_of(vals), rets, scheme, group=2)
        scaled = pnl_series(panel_of(vals * 37.5), rets, scheme, group=2)
        np.testing.assert_allclose(scaled.daily, base.daily, atol=1e-15)


def test_bets_sum_to_one_every_trading_day():
    ds = generate_synthetic_market(SynthConfig(n_assets=12, n_days=40, seed=6))
    panel = compute_ovi(ds)
    rets = compute_returns(ds)
    for kind in BetKind:
        scheme = BetScheme(kind=kind, mpc=Mpc.MarketMaker
                           if kind in (BetKind.Volume, BetKind.NominalVolume,
                                       BetKind.RelativeVolume) else None)
        sig = panel.for_mpc(Mpc.MarketMaker)
        p = pnl_series(sig, rets, scheme, group=3, data=ds)
        w = raw_bet_weights(sig, ds, scheme)[:, :rets.values.shape[1]]
        member = quantile_groups(sig).in_group(3)[:, :rets.values.shape[1]]
        w = np.where(member & (sig.values[:, :rets.values.shape[1]] != 0)
                     & rets.mask, w, 0.0)
        totals = w.sum(axis=0)
        b = w / np.where(totals > 0, totals, 1.0)
        np.testing.assert_allclose(b.sum(axis=0)[totals > 0], 1.0, atol=1e-12)
        assert set(np.unique(p.bet_totals)) <= {0.0, 1.0}


def test_group_membership_restricts_the_book():
    sig = panel_of(np.array([[0.9], [0.5], [0.1], [0.0]]))
    rets = returns_of(np.array([[0.01], [0.01], [0.01], [0.01]]))
    q1 = pnl_series(sig, rets, BetScheme(), group=1)
    q3 = pnl_series(sig, rets, BetScheme(), group=3)
    assert q1.n_positions[0] == 3
    assert q3.n_positions[0] < 3


def test_misaligned_panels_raise():
    sig = panel_of(np.ones((2, 5)))
    rets = returns_of(np.ones((3, 4)) * 0.01)
    with pytest.raises(DimensionError):
        pnl_series(sig, rets, BetScheme(), group=1)


def test_holding_period_definitions():
    ds = generate_synthetic_market(SynthConfig(n_assets=6, n_days=25, seed=9))
    sig = compute_ovi(ds).for_mpc(Mpc.MarketMaker)
    base = pnl_series(sig, compute_returns(
        ds, ReturnMode(ReturnSpan.CL_tmCL, ReturnBasis.ExcessMarket)),
        BetScheme(), group=1)
    h1 = holding_period_pnl(sig, ds, BetScheme(), 1, 1)
    np.testing.assert_allclose(h1.daily, base.daily, atol=1e-15)


def test_holding_period_two_day_hand_sum():
    sig = panel_of(np.array([[0.5, 0.0, 0.0]]))
    rows = [(D1, 39, "AAA", "C", 100.0, EXP, "MM", "BUY", "NA", 5, 1)]
    bars = [("2020-01-06", "AAA", 100.0, 100.0),
            ("2020-01-07", "AAA", 100.0, 101.0),
            ("2020-01-08", "AAA", 101.0, 103.02),
            ("2020-01-09", "AAA", 103.0, 103.0)]
    bars += [(d, "SPY", 50.0, 50.0) for d, *_ in bars]
    ds = make_dataset(rows, equities=bars)
    sig = compute_ovi(ds).for_mpc(Mpc.MarketMaker)
    with pytest.warns(UserWarning, match="truncated"):
        p = holding_period_pnl(sig, ds, BetScheme(), 1, 2,
                               basis=ReturnBasis.Raw)
    # day-1 close-to-close 1%, day-2 close-to-close 2%: the leg earns 3%
    assert p.daily[0] == pytest.approx(0.03, abs=1e-12)


def test_zero_returns_zero_pnl_for_any_horizon():
    rows = [(D1, 39, "AAA", "C", 100.0, EXP, "MM", "BUY", "NA", 5, 1)]
    bars = [(f"2020-01-{6+i:02d}", a, 100.0, 100.0)
            for i in range(4) for a in ("AAA", "SPY")]
    ds = make_dataset(rows, equities=bars)
    sig = compute_ovi(ds).for_mpc(Mpc.MarketMaker)
    import warnings

    for h in (1, 2, 3):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p = holding_period_pnl(sig, ds, BetScheme(), 1, h)
        assert np.all(p.daily == 0.0)
