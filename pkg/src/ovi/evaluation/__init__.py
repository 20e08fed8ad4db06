from .portfolio import (
    BetKind, BetScheme, PnlSeries, QuantileAssignment, bet_sizes,
    holding_period_pnl, pnl_series, quantile_groups, raw_bet_weights,
)
from .returns import (
    ReturnBasis, ReturnMode, ReturnSpan, ReturnsPanel, compute_returns,
)
from .stats import (
    ANNUALIZATION, pca_explained_variance, performance_summary, sharpe_ratio,
    sr_difference_test, sr_significance_test, sr_test_statistics,
)

__all__ = [
    "ANNUALIZATION", "BetKind", "BetScheme", "PnlSeries", "QuantileAssignment",
    "ReturnBasis", "ReturnMode", "ReturnSpan", "ReturnsPanel", "bet_sizes",
    "compute_returns", "holding_period_pnl", "pca_explained_variance",
    "performance_summary", "pnl_series", "quantile_groups", "raw_bet_weights",
    "sharpe_ratio", "sr_difference_test", "sr_significance_test",
    "sr_test_statistics",
]
