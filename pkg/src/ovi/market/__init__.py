from .csv_io import (
    IntradayCsvSchema, parse_daily_summary, parse_equity_bars, parse_intraday,
    write_daily_csv, write_equity_csv, write_intraday_csv,
)
from .synthetic import SynthConfig, generate_synthetic_market
from .types import (
    ContractKey, DailyOptionSummary, EquityBar, Intent, MarketDataset, Mpc,
    OptionSide, TradeSide, VolumeBucket, merge_datasets,
)

__all__ = [
    "ContractKey", "DailyOptionSummary", "EquityBar", "Intent",
    "IntradayCsvSchema", "MarketDataset", "Mpc", "OptionSide", "SynthConfig",
    "TradeSide", "VolumeBucket", "generate_synthetic_market", "merge_datasets",
    "parse_daily_summary", "parse_equity_bars", "parse_intraday",
    "write_daily_csv", "write_equity_csv", "write_intraday_csv",
]
