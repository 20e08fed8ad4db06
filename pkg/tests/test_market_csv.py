"""Parser and serializer contracts for the three CSV formats."""

import io

import numpy as np
import pandas as pd
import pytest

from ovi.errors import ParseError, ValidationError
from ovi.market import (
    IntradayCsvSchema, parse_daily_summary, parse_equity_bars, parse_intraday,
    write_daily_csv, write_equity_csv, write_intraday_csv,
)

INTRADAY_HEADER = ("date,slot,underlying,call_put,strike,expiry,"
                   "mpc,side,intent,cum_volume,cum_trades")
DAILY_HEADER = ("date,underlying,call_put,strike,expiry,"
                "open,close,low,high,open_interest,total_volume")


def intraday_csv(rows):
    return io.StringIO("\n".join([INTRADAY_HEADER] + rows) + "\n")


def test_single_row_maps_to_one_bucket():
    df = parse_intraday(intraday_csv(
        ["2020-01-06,1,AAA,C,100,2020-03-20,MM,BUY,NA,10,2"]))
    assert len(df) == 1
    row = df.iloc[0]
    assert row["cum_volume"] == 10
    assert row["cum_trades"] == 2
    assert row["slot"] == 1
    assert row["mpc"] == "MM"


def test_cumulative_decrease_is_a_validation_error_naming_the_key():
    src = intraday_csv([
        "2020-01-06,1,AAA,C,100,2020-03-20,MM,BUY,NA,10,2",
        "2020-01-06,2,AAA,C,100,2020-03-20,MM,BUY,NA,8,3",
    ])
    with pytest.raises(ValidationError, match="AAA.*slot 2"):
        parse_intraday(src)


def test_lenient_mode_clamps_and_counts():
    src = intraday_csv([
        "2020-01-06,1,AAA,C,100,2020-03-20,MM,BUY,NA,10,2",
        "2020-01-06,2,AAA,C,100,2020-03-20,MM,BUY,NA,8,3",
        "2020-01-06,3,AAA,C,100,2020-03-20,MM,BUY,NA,12,4",
    ])
    df = parse_intraday(src, IntradayCsvSchema(strict=False))
    assert df.attrs["quality"]["clamped_rows"] == 1
    assert list(df.sort_values("slot")["cum_volume"]) == [10, 10, 12]


def test_full_39_slot_series_round_trips_field_by_field(tmp_path):
    cum = np.cumsum(np.arange(1, 40))
    rows = [f"2020-01-06,{s},AAA,C,100,2020-03-20,CUST,BUY,OPEN,{cum[s-1]},{s}"
            for s in range(1, 40)]
    df = parse_intraday(intraday_csv(rows))
    assert len(df) == 39
    # last slot carries the daily total
    assert df.loc[df["slot"].idxmax(), "cum_volume"] == cum[-1]
    expected = pd.DataFrame({
        "slot": np.arange(1, 40, dtype="int16"),
        "cum_volume": cum.astype("int64"),
    })
    got = df.sort_values("slot")[["slot", "cum_volume"]].reset_index(drop=True)
    pd.testing.assert_frame_equal(got, expected)

    out = tmp_path / "intraday.csv"
    write_intraday_csv(df, out)
    again = parse_intraday(out)
    pd.testing.assert_frame_equal(
        df.sort_values(["slot"]).reset_index(drop=True),
        again.sort_values(["slot"]).reset_index(drop=True))


def test_header_mismatch_and_malformed_rows_carry_line_numbers():
    with pytest.raises(ParseError, match="line 1"):
        parse_intraday(io.StringIO("nope,really\n1,2\n"))
    src = intraday_csv([
        "2020-01-06,1,AAA,C,100,2020-03-20,MM,BUY,NA,10,2",
        "2020-01-06,2,AAA,C,oops,2020-03-20,MM,BUY,NA,11,3",
    ])
    with pytest.raises(ParseError, match="line 3"):
        parse_intraday(src)


def test_unknown_labels_and_bad_slots_rejected():
    with pytest.raises(ParseError, match="mpc"):
        parse_intraday(intraday_csv(
            ["2020-01-06,1,AAA,C,100,2020-03-20,WHO,BUY,NA,1,1"]))
    with pytest.raises(ParseError, match="slot"):
        parse_intraday(intraday_csv(
            ["2020-01-06,40,AAA,C,100,2020-03-20,MM,BUY,NA,1,1"]))
    with pytest.raises(ParseError, match="duplicate"):
        parse_intraday(intraday_csv(
            ["2020-01-06,1,AAA,C,100,2020-03-20,MM,BUY,NA,1,1",
             "2020-01-06,1,AAA,C,100,2020-03-20,MM,BUY,NA,1,1"]))


def daily_csv(rows):
    return io.StringIO("\n".join([DAILY_HEADER] + rows) + "\n")


def test_daily_summary_ordering():
    df = parse_daily_summary(daily_csv(
        ["2020-01-06,AAA,C,100,2020-03-20,2,3,1,4,100,50"]))
    assert len(df) == 1
    with pytest.raises(ValidationError):
        parse_daily_summary(daily_csv(
            ["2020-01-06,AAA,C,100,2020-03-20,4.5,4.5,5,4,100,50"]))
    with pytest.raises(ValidationError, match="open interest"):
        parse_daily_summary(daily_csv(
            ["2020-01-06,AAA,C,100,2020-03-20,2,3,1,4,-1,50"]))


def test_daily_summary_three_contract_fixture_round_trips(tmp_path):
    rows = [
        "2020-01-06,AAA,C,100,2020-03-20,2,3,1,4,100,50",
        "2020-01-06,AAA,P,95,2020-03-20,1.5,1.25,1,2,80,20",
        "2020-01-06,BBB,C,50,2020-06-19,5,5,4.5,5.5,10,1",
    ]
    df = parse_daily_summary(daily_csv(rows))
    assert len(df) == 3
    assert df["open_interest"].tolist() == [100, 80, 10]
    assert df["strike"].tolist() == [100.0, 95.0, 50.0]
    out = tmp_path / "daily.csv"
    write_daily_csv(df, out)
    pd.testing.assert_frame_equal(df, parse_daily_summary(out))


def equity_csv(rows):
    return io.StringIO("\n".join(["date,asset,open,close"] + rows) + "\n")


def test_equity_bars():
    df = parse_equity_bars(equity_csv(["2020-01-06,AAA,100,101"]))
    assert len(df) == 1
    with pytest.raises(ParseError, match="duplicate"):
        parse_equity_bars(equity_csv(
            ["2020-01-06,AAA,100,101", "2020-01-06,AAA,99,100"]))
    with pytest.raises(ValidationError, match="non-positive"):
        parse_equity_bars(equity_csv(["2020-01-06,AAA,0,101"]))


def test_equity_two_by_five_fixture(tmp_path):
    rows = [f"2020-01-{6+d:02d},{a},100,{100+d}"
            for a in ("AAA", "BBB") for d in range(5)]
    df = parse_equity_bars(equity_csv(rows))
    assert len(df) == 10
    out = tmp_path / "equity.csv"
    write_equity_csv(df, out)
    pd.testing.assert_frame_equal(df, parse_equity_bars(out))


def test_record_types_round_out_the_data_model():
    from datetime import date

    from ovi.market import (
        ContractKey, DailyOptionSummary, EquityBar, Intent, Mpc, OptionSide,
        TradeSide, VolumeBucket,
    )

    key = ContractKey("AAA", OptionSide.Call, 100.0, date(2020, 3, 20))
    bucket = VolumeBucket(day=date(2020, 1, 6), slot=39, contract=key,
                          mpc=Mpc.MarketMaker, trade_side=TradeSide.Buy,
                          intent=Intent.Unspecified, cum_volume=10, cum_trades=2)
    assert bucket.contract.strike == 100.0
    summary = DailyOptionSummary(day=date(2020, 1, 6), contract=key,
                                 open_px=2.0, close_px=3.0, low_px=1.0,
                                 high_px=4.0, open_interest=5, total_volume=12)
    assert summary.mid_price == 2.5
    bar = EquityBar(asset="AAA", day=date(2020, 1, 6), open_px=10.0,
                    close_px=10.5)
    assert bar.close_px > bar.open_px
    with pytest.raises(ValidationError):
        ContractKey("AAA", OptionSide.Put, -1.0, date(2020, 3, 20))
