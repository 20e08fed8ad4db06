"""Canonical market data model.

Bulk data is held in pandas DataFrames with fixed column layouts (the
same layouts used by the CSV interchange formats); small typed records
and enums are provided for keys and labels. A `MarketDataset` bundles
the three tables, derives integer-coded views used by the signal and
flow machinery, and checks cross-table invariants on construction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from datetime import date as _date
from functools import cached_property

import numpy as np
import pandas as pd

from ..errors import ValidationError


class Mpc(enum.Enum):
    """Market participant classes distinguished by the exchange feed."""

    Firm = "FIRM"
    Broker = "BROKER"
    MarketMaker = "MM"
    Customer = "CUST"
    ProfessionalCustomer = "PROCUST"

    @property
    def label(self) -> str:
        return self.value

    @classmethod
    def from_label(cls, label: str) -> "Mpc":
        try:
            return cls(label)
        except ValueError:
            raise ValidationError(f"unknown MPC label {label!r}") from None


MPC_LABELS = [m.value for m in Mpc]
MPC_INDEX = {m: i for i, m in enumerate(Mpc)}
N_MPC = len(MPC_LABELS)


class OptionSide(enum.Enum):
    Call = "C"
    Put = "P"


class TradeSide(enum.Enum):
    Buy = "BUY"
    Sell = "SELL"


class Intent(enum.Enum):
    Open = "OPEN"
    Close = "CLOSE"
    Unspecified = "NA"


SIDE_LABELS = [s.value for s in TradeSide]
INTENT_LABELS = [i.value for i in Intent]
CP_LABELS = [s.value for s in OptionSide]

N_SLOTS = 39  # 10-minute reports, 9:40 through 16:00 ET

BUCKET_COLUMNS = [
    "date", "slot", "underlying", "call_put", "strike", "expiry",
    "mpc", "side", "intent", "cum_volume", "cum_trades", "exchange",
]
SUMMARY_COLUMNS = [
    "date", "underlying", "call_put", "strike", "expiry",
    "open", "close", "low", "high", "open_interest", "total_volume",
]
EQUITY_COLUMNS = ["date", "asset", "open", "close"]

CONTRACT_KEY_COLUMNS = ["underlying", "call_put", "strike", "expiry"]
CONTRACT_DAY_COLUMNS = ["date"] + CONTRACT_KEY_COLUMNS


@dataclass(frozen=True)
class ContractKey:
    """Identity of one listed option series."""

    underlying: str
    option_side: OptionSide
    strike: float
    expiry: _date

    def __post_init__(self):
        if self.strike <= 0:
            raise ValidationError(f"strike must be positive, got {self.strike}")


@dataclass(frozen=True)
class VolumeBucket:
    """One cumulative intraday report row."""

    day: _date
    slot: int
    contract: ContractKey
    mpc: Mpc
    trade_side: TradeSide
    intent: Intent
    cum_volume: int
    cum_trades: int


@dataclass(frozen=True)
class DailyOptionSummary:
    """End-of-day OHLC, open interest and total volume for one contract."""

    day: _date
    contract: ContractKey
    open_px: float
    close_px: float
    low_px: float
    high_px: float
    open_interest: int
    total_volume: int

    @property
    def mid_price(self) -> float:
        """Average of open and close, the per-contract daily price."""
        return 0.5 * (self.open_px + self.close_px)


@dataclass(frozen=True)
class EquityBar:
    """Split- and dividend-adjusted daily open/close of an underlying."""

    asset: str
    day: _date
    open_px: float
    close_px: float


def _categorical(values, categories) -> pd.Categorical:
    return pd.Categorical(values, categories=categories)


def empty_buckets_frame() -> pd.DataFrame:
    return pd.DataFrame({
        "date": pd.Series(dtype="datetime64[ns]"),
        "slot": pd.Series(dtype="int16"),
        "underlying": pd.Series(dtype="object"),
        "call_put": _categorical([], CP_LABELS),
        "strike": pd.Series(dtype="float64"),
        "expiry": pd.Series(dtype="datetime64[ns]"),
        "mpc": _categorical([], MPC_LABELS),
        "side": _categorical([], SIDE_LABELS),
        "intent": _categorical([], INTENT_LABELS),
        "cum_volume": pd.Series(dtype="int64"),
        "cum_trades": pd.Series(dtype="int64"),
        "exchange": pd.Series(dtype="object"),
    })


def normalize_buckets_frame(df: pd.DataFrame, exchange: str = "X1") -> pd.DataFrame:
    """Coerce a bucket table to the canonical dtypes and column order."""
    out = df.copy()
    if "exchange" not in out.columns:
        out["exchange"] = exchange
    out["date"] = pd.to_datetime(out["date"])
    out["expiry"] = pd.to_datetime(out["expiry"])
    out["slot"] = out["slot"].astype("int16")
    out["strike"] = out["strike"].astype("float64")
    out["cum_volume"] = out["cum_volume"].astype("int64")
    out["cum_trades"] = out["cum_trades"].astype("int64")
    for col, cats in [("call_put", CP_LABELS), ("mpc", MPC_LABELS),
                      ("side", SIDE_LABELS), ("intent", INTENT_LABELS)]:
        out[col] = _categorical(out[col], cats)
        if out[col].isna().any():
            bad = sorted(set(df[col]) - set(cats))
            raise ValidationError(f"unknown {col} label(s) {bad}")
    return out[BUCKET_COLUMNS]


def normalize_summaries_frame(df: pd.DataFrame) -> pd.DataFrame:
    out = df.copy()
    out["date"] = pd.to_datetime(out["date"])
    out["expiry"] = pd.to_datetime(out["expiry"])
    out["strike"] = out["strike"].astype("float64")
    out["call_put"] = _categorical(out["call_put"], CP_LABELS)
    for col in ["open", "close", "low", "high"]:
        out[col] = out[col].astype("float64")
    out["open_interest"] = out["open_interest"].astype("int64")
    out["total_volume"] = out["total_volume"].astype("int64")
    return out[SUMMARY_COLUMNS]


def normalize_equities_frame(df: pd.DataFrame) -> pd.DataFrame:
    out = df.copy()
    out["date"] = pd.to_datetime(out["date"])
    out["open"] = out["open"].astype("float64")
    out["close"] = out["close"].astype("float64")
    return out[EQUITY_COLUMNS]


def _pack_codes(code_arrays, sizes):
    """Combine several small non-negative integer code arrays into one int64 key."""
    key = np.zeros(len(code_arrays[0]), dtype=np.int64)
    for codes, size in zip(code_arrays, sizes):
        key *= int(size)
        key += codes.astype(np.int64)
    return key


class FlowTable:
    """Integer-coded view of the daily per-contract flows.

    One row per (exchange, day, contract, mpc, side, intent) with the
    day's total volume and trade count. All label columns are encoded
    against the owning dataset's index arrays so downstream aggregation
    is pure numpy.
    """

    def __init__(self, dataset: "MarketDataset", frame: pd.DataFrame):
        self.frame = frame
        und = frame["underlying"]
        if isinstance(und.dtype, pd.CategoricalDtype) and \
                list(und.cat.categories) == list(dataset.assets):
            self.asset_idx = und.cat.codes.to_numpy().astype(np.int64)
        else:
            self.asset_idx = pd.Categorical(
                und, categories=dataset.assets).codes.astype(np.int64)
        self.day_idx = np.searchsorted(
            dataset.days, frame["date"].to_numpy()).astype(np.int64)
        self.mpc_idx = frame["mpc"].cat.codes.to_numpy().astype(np.int64)
        self.side_idx = frame["side"].cat.codes.to_numpy().astype(np.int64)
        self.intent_idx = frame["intent"].cat.codes.to_numpy().astype(np.int64)
        self.cp_idx = frame["call_put"].cat.codes.to_numpy().astype(np.int64)
        exch = frame["exchange"]
        if not isinstance(exch.dtype, pd.CategoricalDtype):
            exch = exch.astype("category")
        self.exchange_labels = list(exch.cat.categories)
        self.exch_idx = exch.cat.codes.to_numpy().astype(np.int64)
        self.volume = frame["volume"].to_numpy(np.float64)
        self.trades = frame["trades"].to_numpy(np.float64)
        self.contract_day_row = frame["_cd_row"].to_numpy(np.int64)

    def __len__(self):
        return len(self.frame)


class MarketDataset:
    """Immutable panel of intraday flows, daily summaries and equity bars.

    Construction validates the cross-table invariants (every traded
    contract has a same-day summary, every referenced asset has equity
    bars, the benchmark trades on every day). All derived views are
    computed lazily and cached; the object is treated as read-only
    afterwards and is safe to share across workers.
    """

    def __init__(self, buckets: pd.DataFrame, summaries: pd.DataFrame,
                 equities: pd.DataFrame, benchmark: str = "SPY",
                 *, quality: dict | None = None, validate: bool = True,
                 preaggregated: bool = False, flows_hint: pd.DataFrame | None = None):
        self.buckets = buckets if len(buckets) else empty_buckets_frame()
        self.summaries = summaries
        self.equities = equities
        self.benchmark = benchmark
        self.quality = dict(quality or {})
        # set by the synthetic generator: bucket keys are unique and carry a
        # single slot, so daily totals need no group reduction
        self._preaggregated = preaggregated
        # optional precomputed daily flow frame (must carry _cd_row)
        self._flows_hint = flows_hint
        self._day_feature_cache = {}
        if validate:
            self._validate()

    # -- index structure ------------------------------------------------

    @cached_property
    def days(self) -> np.ndarray:
        return np.sort(self.equities["date"].unique())

    @cached_property
    def assets(self) -> np.ndarray:
        return np.sort(self.equities["asset"].unique())

    @cached_property
    def day_index(self) -> dict:
        return {d: i for i, d in enumerate(self.days)}

    @cached_property
    def asset_index(self) -> dict:
        return {a: i for i, a in enumerate(self.assets)}

    @property
    def n_days(self) -> int:
        return len(self.days)

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    # -- validation -----------------------------------------------------

    def _validate(self):
        eq = self.equities
        if eq.duplicated(subset=["asset", "date"]).any():
            raise ValidationError("duplicate (asset, day) equity bars")
        if (eq[["open", "close"]] <= 0).any().any():
            raise ValidationError("equity prices must be strictly positive")
        if self.benchmark not in set(eq["asset"]):
            raise ValidationError(f"benchmark {self.benchmark!r} has no equity bars")
        bench_days = set(eq.loc[eq["asset"] == self.benchmark, "date"])
        missing = [d for d in self.days if d not in bench_days]
        if missing:
            raise ValidationError(
                f"benchmark {self.benchmark!r} missing on {len(missing)} day(s), "
                f"first {pd.Timestamp(missing[0]).date()}")

        b = self.buckets
        if len(b):
            if (b["slot"].lt(1) | b["slot"].gt(N_SLOTS)).any():
                raise ValidationError(f"slot outside 1..{N_SLOTS}")
            mm = b["mpc"].to_numpy() == Mpc.MarketMaker.value
            unspecified = b["intent"].to_numpy() == Intent.Unspecified.value
            if (mm != unspecified).any():
                raise ValidationError(
                    "intent must be NA exactly for Market Maker rows")
            # every traded contract needs a same-day summary
            traded = b[CONTRACT_DAY_COLUMNS].drop_duplicates()
            joined = traded.merge(self.summaries[CONTRACT_DAY_COLUMNS].drop_duplicates(),
                                  on=CONTRACT_DAY_COLUMNS, how="left", indicator=True)
            orphans = joined["_merge"] == "left_only"
            if orphans.any():
                row = joined[orphans].iloc[0]
                raise ValidationError(
                    "bucket contract without same-day summary: "
                    f"{row['underlying']} {row['call_put']} {row['strike']} "
                    f"{pd.Timestamp(row['date']).date()}")
            # every referenced asset has an equity bar on days it appears
            pairs = b[["underlying", "date"]].drop_duplicates()
            eqk = eq[["asset", "date"]].rename(columns={"asset": "underlying"})
            joined = pairs.merge(eqk, on=["underlying", "date"], how="left", indicator=True)
            orphans = joined["_merge"] == "left_only"
            if orphans.any():
                row = joined[orphans].iloc[0]
                raise ValidationError(
                    f"no equity bar for {row['underlying']} on "
                    f"{pd.Timestamp(row['date']).date()}")
        if len(self.summaries):
            s = self.summaries
            bad = (s["low"] > s[["open", "close"]].min(axis=1)) | \
                  (s[["open", "close"]].max(axis=1) > s["high"])
            if bad.any():
                raise ValidationError("summary OHLC ordering violated")
            if (s["open_interest"] < 0).any():
                raise ValidationError("negative open interest")

    # -- derived views ----------------------------------------------------

    @cached_property
    def contract_days(self) -> pd.DataFrame:
        """One row per (day, contract) with price, OI, maturity and spot."""
        cd = self.summaries[CONTRACT_DAY_COLUMNS].copy()
        cd["price"] = 0.5 * (self.summaries["open"] + self.summaries["close"])
        cd["open_interest"] = self.summaries["open_interest"]
        cd = cd.drop_duplicates(subset=CONTRACT_DAY_COLUMNS).reset_index(drop=True)
        cd["maturity_days"] = (cd["expiry"] - cd["date"]).dt.days.astype("float64")
        eq = self.equities
        spot = eq.assign(spot=0.5 * (eq["open"] + eq["close"]))
        spot = spot.rename(columns={"asset": "underlying"})[["underlying", "date", "spot"]]
        cd = cd.merge(spot, on=["underlying", "date"], how="left")
        cd["asset_idx"] = cd["underlying"].map(self.asset_index).astype("int64")
        cd["day_idx"] = cd["date"].map(self.day_index).astype("int64")
        return cd

    def _daily_flow_frame(self, max_slot: int | None = None) -> pd.DataFrame:
        b = self.buckets
        if max_slot is not None:
            b = b[b["slot"] <= max_slot]
        if not len(b):
            f = empty_buckets_frame().rename(
                columns={"cum_volume": "volume", "cum_trades": "trades"})
            f = f.drop(columns=["slot"])
            f["_cd_row"] = pd.Series(dtype="int64")
            return f
        key_cols = ["exchange", "date", "underlying", "call_put", "strike",
                    "expiry", "mpc", "side", "intent"]
        if self._preaggregated:
            f = b.drop(columns=["slot"]).rename(
                columns={"cum_volume": "volume", "cum_trades": "trades"})
        else:
            # cumulative series are monotone in slot, so the daily total is the max
            f = (b.groupby(key_cols, observed=True, sort=False)[["cum_volume", "cum_trades"]]
                  .max().reset_index()
                  .rename(columns={"cum_volume": "volume", "cum_trades": "trades"}))
        cd = self.contract_days[CONTRACT_DAY_COLUMNS].reset_index(names="_cd_row")
        f = f.merge(cd, on=CONTRACT_DAY_COLUMNS, how="left")
        if f["_cd_row"].isna().any():
            raise ValidationError("flow row without contract-day entry")
        f["_cd_row"] = f["_cd_row"].astype("int64")
        return f

    @cached_property
    def flows(self) -> FlowTable:
        """Daily total flows, one row per (exchange, day, contract, mpc, side, intent)."""
        if self._flows_hint is not None:
            return FlowTable(self, self._flows_hint)
        return FlowTable(self, self._daily_flow_frame())

    def flows_at_slot(self, slot: int) -> FlowTable:
        """Flows cumulated from the open through intraday report `slot`."""
        if not 1 <= slot <= N_SLOTS:
            raise ValidationError(f"slot cutoff must be in 1..{N_SLOTS}, got {slot}")
        if slot == N_SLOTS:
            return self.flows
        return FlowTable(self, self._daily_flow_frame(max_slot=slot))

    @cached_property
    def equity_panels(self) -> tuple[np.ndarray, np.ndarray]:
        """(open, close) arrays of shape (n_assets, n_days), NaN where absent."""
        shape = (self.n_assets, self.n_days)
        opens = np.full(shape, np.nan)
        closes = np.full(shape, np.nan)
        ai = self.equities["asset"].map(self.asset_index).to_numpy(np.int64)
        di = self.equities["date"].map(self.day_index).to_numpy(np.int64)
        opens[ai, di] = self.equities["open"].to_numpy(np.float64)
        closes[ai, di] = self.equities["close"].to_numpy(np.float64)
        return opens, closes

    def contract_day_rows_for_day(self, day) -> np.ndarray:
        """Row indices of `contract_days` belonging to one trading day."""
        di = self.day_index.get(pd.Timestamp(day))
        if di is None:
            raise ValidationError(f"day {day} not in dataset")
        return np.flatnonzero(self.contract_days["day_idx"].to_numpy() == di)


def merge_datasets(datasets: list[MarketDataset], benchmark: str | None = None) -> MarketDataset:
    """Pool several parsed datasets (e.g. one per exchange) into one."""
    if not datasets:
        raise ValidationError("nothing to merge")
    benchmark = benchmark or datasets[0].benchmark
    buckets = pd.concat([d.buckets for d in datasets], ignore_index=True)
    summaries = pd.concat([d.summaries for d in datasets], ignore_index=True)
    summaries = summaries.drop_duplicates(subset=CONTRACT_DAY_COLUMNS)
    equities = pd.concat([d.equities for d in datasets], ignore_index=True)
    equities = equities.drop_duplicates(subset=["asset", "date"])
    quality: dict = {}
    for d in datasets:
        for k, v in d.quality.items():
            quality[k] = quality.get(k, 0) + v
    return MarketDataset(buckets, summaries, equities, benchmark, quality=quality)
