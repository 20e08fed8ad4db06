"""Option volume imbalance signals, backtesting and cross-impact analysis."""

__version__ = "0.1.0"

from . import cli, errors, evaluation, flows, market, network, powerlaw, \
    pricing, regression, signals
from .evaluation import (
    BetKind, BetScheme, PnlSeries, ReturnBasis, ReturnMode, ReturnSpan,
    compute_returns, performance_summary, pnl_series, quantile_groups,
    sr_difference_test, sr_significance_test,
)
from .market import (
    MarketDataset, Mpc, OptionSide, SynthConfig, generate_synthetic_market,
)
from .signals import Feature, FilterSpec, OviPanel, SignalPanel, compute_ovi

__all__ = [
    "BetKind", "BetScheme", "Feature", "FilterSpec", "MarketDataset", "Mpc",
    "OptionSide", "OviPanel", "PnlSeries", "ReturnBasis", "ReturnMode",
    "ReturnSpan", "SignalPanel", "SynthConfig", "cli", "compute_ovi",
    "compute_returns", "errors", "evaluation", "flows",
    "generate_synthetic_market", "market", "network", "performance_summary",
    "pnl_series", "powerlaw", "pricing", "quantile_groups", "regression",
    "signals", "sr_difference_test", "sr_significance_test", "__version__",
]
