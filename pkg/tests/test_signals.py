"""Imbalance construction: hand aggregations, invariants, buckets, open-t."""

import numpy as np
import pytest

from conftest import make_dataset
from ovi.market import Mpc
from ovi.signals import (
    Feature, FilterSpec, FlowKind, IntentRestriction, SideRestriction,
    compute_ovi, directional_flows, feature_buckets, open_t_ovi,
)

D1, EXP = "2020-01-06", "2020-03-20"


def cell(panel, asset, mpc):
    i = list(panel.assets).index(asset)
    return panel.values[i, 0, [m.value for m in Mpc].index(mpc.value)]


def test_hand_aggregation_call_legs():
    ds = make_dataset([
        (D1, 39, "AAA", "C", 100.0, EXP, "MM", "BUY", "NA", 60, 6),
        (D1, 39, "AAA", "C", 100.0, EXP, "MM", "SELL", "NA", 40, 4),
    ])
    fl = directional_flows(ds, "AAA", D1, Mpc.MarketMaker)
    assert (fl.up, fl.down) == (60.0, 40.0)
    panel = compute_ovi(ds)
    assert cell(panel, "AAA", Mpc.MarketMaker) == pytest.approx(0.2, abs=1e-15)


def test_put_buy_is_downward_flow():
    ds = make_dataset([(D1, 39, "AAA", "P", 90.0, EXP, "CUST", "BUY", "OPEN", 30, 3)])
    fl = directional_flows(ds, "AAA", D1, Mpc.Customer)
    assert (fl.up, fl.down) == (0.0, 30.0)
    assert cell(compute_ovi(ds), "AAA", Mpc.Customer) == -1.0


def test_nominal_volume_weights_by_contract_price():
    ds = make_dataset([(D1, 39, "AAA", "C", 100.0, EXP, "FIRM", "BUY", "OPEN", 10, 1)],
                      default_price=2.5)
    fl = directional_flows(ds, "AAA", D1, Mpc.Firm,
                           FilterSpec(flow_kind=FlowKind.NominalVolume))
    assert (fl.up, fl.down) == (25.0, 0.0)


def test_zero_flow_cells_are_masked_zeros():
    ds = make_dataset([(D1, 39, "AAA", "C", 100.0, EXP, "MM", "BUY", "NA", 5, 1)])
    panel = compute_ovi(ds)
    i = list(panel.assets).index("AAA")
    j = [m.value for m in Mpc].index("CUST")
    assert panel.values[i, 0, j] == 0.0
    assert panel.zero_mask[i, 0, j]
    assert not panel.zero_mask[i, 0, [m.value for m in Mpc].index("MM")]
    assert np.all(np.abs(panel.values) <= 1.0)


def swap_sides(rows):
    flip = {"BUY": "SELL", "SELL": "BUY"}
    return [r[:7] + (flip[r[7]],) + r[8:] for r in rows]


def test_swapping_buy_and_sell_negates_ovi():
    rows = [
        (D1, 39, "AAA", "C", 100.0, EXP, "MM", "BUY", "NA", 60, 6),
        (D1, 39, "AAA", "C", 100.0, EXP, "MM", "SELL", "NA", 40, 4),
        (D1, 39, "AAA", "P", 90.0, EXP, "MM", "BUY", "NA", 25, 2),
    ]
    a = compute_ovi(make_dataset(rows))
    b = compute_ovi(make_dataset(swap_sides(rows)))
    np.testing.assert_allclose(b.values, -a.values, atol=0)


def test_scaling_all_volumes_leaves_ovi_unchanged():
    rows = [
        (D1, 39, "AAA", "C", 100.0, EXP, "MM", "BUY", "NA", 60, 6),
        (D1, 39, "AAA", "C", 100.0, EXP, "MM", "SELL", "NA", 40, 4),
    ]
    scaled = [r[:9] + (r[9] * 7, r[10] * 7) for r in rows]
    a = compute_ovi(make_dataset(rows))
    b = compute_ovi(make_dataset(scaled))
    np.testing.assert_array_equal(a.values, b.values)


def test_buy_and_sell_restrictions_decompose_the_flows():
    rows = [
        (D1, 39, "AAA", "C", 100.0, EXP, "MM", "BUY", "NA", 60, 6),
        (D1, 39, "AAA", "C", 100.0, EXP, "MM", "SELL", "NA", 40, 4),
        (D1, 39, "AAA", "P", 90.0, EXP, "MM", "SELL", "NA", 15, 2),
        (D1, 39, "AAA", "P", 90.0, EXP, "MM", "BUY", "NA", 5, 1),
    ]
    ds = make_dataset(rows)
    both = directional_flows(ds, "AAA", D1, Mpc.MarketMaker)
    buy = directional_flows(ds, "AAA", D1, Mpc.MarketMaker,
                            FilterSpec(side_restriction=SideRestriction.BuyOnly))
    sell = directional_flows(ds, "AAA", D1, Mpc.MarketMaker,
                             FilterSpec(side_restriction=SideRestriction.SellOnly))
    assert buy.up + sell.up == both.up
    assert buy.down + sell.down == both.down


def test_union_of_exchanges_pools_volumes():
    rows = [
        (D1, 39, "AAA", "C", 100.0, EXP, "MM", "BUY", "NA", 10, 1, "NOM"),
        (D1, 39, "AAA", "C", 100.0, EXP, "MM", "SELL", "NA", 40, 4, "NOM"),
        (D1, 39, "AAA", "C", 100.0, EXP, "MM", "BUY", "NA", 90, 9, "PHLX"),
        (D1, 39, "AAA", "C", 100.0, EXP, "MM", "SELL", "NA", 10, 1, "PHLX"),
    ]
    ds = make_dataset(rows)
    pooled = cell(compute_ovi(ds), "AAA", Mpc.MarketMaker)
    one = cell(compute_ovi(ds, FilterSpec(dataset_restriction=frozenset(["NOM"]))),
               "AAA", Mpc.MarketMaker)
    other = cell(compute_ovi(ds, FilterSpec(dataset_restriction=frozenset(["PHLX"]))),
                 "AAA", Mpc.MarketMaker)
    # pooled = (100-50)/150, not the average of per-exchange imbalances
    assert pooled == pytest.approx((100 - 50) / 150)
    assert one == pytest.approx(-0.6)
    assert other == pytest.approx(0.8)
    assert pooled != pytest.approx((one + other) / 2)


def test_intent_restriction_empties_market_maker_slice():
    rows = [
        (D1, 39, "AAA", "C", 100.0, EXP, "MM", "BUY", "NA", 60, 6),
        (D1, 39, "AAA", "C", 100.0, EXP, "CUST", "BUY", "OPEN", 10, 1),
        (D1, 39, "AAA", "C", 100.0, EXP, "CUST", "SELL", "CLOSE", 30, 3),
    ]
    ds = make_dataset(rows)
    with pytest.warns(UserWarning, match="Market Maker"):
        panel = compute_ovi(ds, FilterSpec(
            intent_restriction=IntentRestriction.OpenOnly))
    assert cell(panel, "AAA", Mpc.MarketMaker) == 0.0
    i = list(panel.assets).index("AAA")
    assert panel.zero_mask[i, 0, [m.value for m in Mpc].index("MM")]
    assert cell(panel, "AAA", Mpc.Customer) == 1.0     # only the open buy
    with pytest.warns(UserWarning):
        closed = compute_ovi(ds, FilterSpec(
            intent_restriction=IntentRestriction.CloseOnly))
    assert cell(closed, "AAA", Mpc.Customer) == -1.0   # only the close sell


def maturity_fixture(maturities):
    rows = []
    for j, mat in enumerate(maturities):
        expiry = np.datetime64(D1) + np.timedelta64(int(mat), "D")
        rows.append((D1, 39, "AAA", "C", 100.0 + j, str(expiry),
                     "MM", "BUY", "NA", 10, 1))
    return make_dataset(rows)


def test_feature_buckets_even_split_and_oracle():
    ds = maturity_fixture([10, 20, 30, 40, 50, 60, 70, 80])
    buckets = feature_buckets(ds, D1, Feature.Maturity)
    counts = np.bincount(list(buckets.values()), minlength=5)
    assert counts[1:].tolist() == [2, 2, 2, 2]

    rng = np.random.default_rng(0)
    mats = rng.choice(np.arange(5, 400), size=100, replace=False)
    ds = maturity_fixture(mats)
    buckets = feature_buckets(ds, D1, Feature.Maturity)
    values = np.sort(mats.astype(float))
    q = np.quantile(values, [0.25, 0.5, 0.75])
    for key, b in buckets.items():
        mat = (np.datetime64(key.expiry) - np.datetime64(D1)).astype(int)
        expected = 1 + (mat > q[0]) + (mat > q[1]) + (mat > q[2])
        assert b == expected
    counts = np.bincount(list(buckets.values()), minlength=5)
    assert counts[1:].tolist() == [25, 25, 25, 25]


def test_feature_buckets_degenerate_ties_and_thin_days():
    ds = maturity_fixture([30, 30, 30, 30, 30])
    buckets = feature_buckets(ds, D1, Feature.Maturity)
    assert set(buckets.values()) == {1}

    thin = maturity_fixture([10, 20])
    buckets = feature_buckets(thin, D1, Feature.Maturity)
    assert set(buckets.values()) == {1}
    assert thin.quality["thin_bucket_days"] >= 1


def test_feature_bucket_filter_restricts_flows():
    ds = maturity_fixture([10, 20, 30, 40, 50, 60, 70, 80])
    top = compute_ovi(ds, FilterSpec(feature_bucket=(Feature.Maturity, 4)))
    i = list(top.assets).index("AAA")
    j = [m.value for m in Mpc].index("MM")
    assert top.total_flow[i, 0, j] == 20.0      # two contracts of ten lots


def test_open_t_equals_daily_at_close_and_zero_on_empty_prefix():
    rows = []
    for slot, cum in ((10, 4), (25, 9), (39, 20)):
        rows.append((D1, slot, "AAA", "C", 100.0, EXP, "MM", "BUY", "NA", cum, cum))
    ds = make_dataset(rows)
    daily = compute_ovi(ds)
    at_close = open_t_ovi(ds, FilterSpec(time_cutoff=39))
    np.testing.assert_array_equal(daily.values, at_close.values)
    early = open_t_ovi(ds, FilterSpec(time_cutoff=5))
    assert early.zero_mask.all()
    assert not np.any(early.values)


def test_open_t_monotone_fixture_matches_hand_path():
    # all upward flow lands in slots 1..5, all downward flow in 30..39
    rows = []
    for slot, cum in ((1, 10), (3, 25), (5, 40)):
        rows.append((D1, slot, "AAA", "C", 100.0, EXP, "MM", "BUY", "NA", cum, cum))
    for slot, cum in ((30, 15), (35, 35), (39, 60)):
        rows.append((D1, slot, "AAA", "C", 100.0, EXP, "MM", "SELL", "NA", cum, cum))
    ds = make_dataset(rows)

    def hand(t):
        up = [c for s, c in ((1, 10), (3, 25), (5, 40)) if s <= t]
        dn = [c for s, c in ((30, 15), (35, 35), (39, 60)) if s <= t]
        u = up[-1] if up else 0
        d = dn[-1] if dn else 0
        return 0.0 if u + d == 0 else (u - d) / (u + d)

    path = []
    for t in range(1, 40):
        panel = open_t_ovi(ds, FilterSpec(time_cutoff=t))
        got = cell(panel, "AAA", Mpc.MarketMaker)
        assert got == pytest.approx(hand(t), abs=1e-15)
        path.append(got)
    assert all(a >= b - 1e-15 for a, b in zip(path, path[1:]))  # non-increasing


def test_per_asset_bucket_switch():
    rows = []
    # AAA maturities 10..40, BBB maturities 100..400: market-wide buckets put
    # all of AAA low; per-asset buckets spread each name over all four
    for j, mat in enumerate((10, 20, 30, 40)):
        expiry = str(np.datetime64(D1) + np.timedelta64(mat, "D"))
        rows.append((D1, 39, "AAA", "C", 100.0 + j, expiry, "MM", "BUY", "NA", 5, 1))
    for j, mat in enumerate((100, 200, 300, 400)):
        expiry = str(np.datetime64(D1) + np.timedelta64(mat, "D"))
        rows.append((D1, 39, "BBB", "C", 100.0 + j, expiry, "MM", "BUY", "NA", 5, 1))
    ds = make_dataset(rows)
    market_wide = feature_buckets(ds, D1, Feature.Maturity)
    per_asset = feature_buckets(ds, D1, Feature.Maturity, per_asset=True)
    mw_aaa = sorted(b for k, b in market_wide.items() if k.underlying == "AAA")
    pa_aaa = sorted(b for k, b in per_asset.items() if k.underlying == "AAA")
    assert mw_aaa == [1, 1, 2, 2]
    assert pa_aaa == [1, 2, 3, 4]
