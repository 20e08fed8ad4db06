"""Daily return panels in the three span conventions.

For signal day d (0-based, d = 0..D-2):

    CL_tmCL   (close_{d+1} - close_d) / close_d
    tmOP_tmCL (close_{d+1} - open_{d+1}) / open_{d+1}
    CL_tmOP   (open_{d+1} - close_d) / close_d      (overnight, the default)

The excess-market basis subtracts the benchmark's same-span return.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..market.types import MarketDataset


class ReturnSpan(enum.Enum):
    CL_tmCL = "CL_tmCL"
    tmOP_tmCL = "tmOP_tmCL"
    CL_tmOP = "CL_tmOP"


class ReturnBasis(enum.Enum):
    Raw = "RR"
    ExcessMarket = "EMR"


@dataclass(frozen=True)
class ReturnMode:
    span: ReturnSpan = ReturnSpan.CL_tmOP
    basis: ReturnBasis = ReturnBasis.ExcessMarket

    @property
    def label(self) -> str:
        return f"{self.basis.value}_{self.span.value}"


@dataclass
class ReturnsPanel:
    """Per (asset, signal day) returns; `mask` is True where defined."""

    values: np.ndarray        # (n_assets, n_days - 1)
    mask: np.ndarray
    assets: np.ndarray
    days: np.ndarray          # signal days, i.e. the first D-1 dataset days
    mode: ReturnMode


def _span_returns(opens, closes, span: ReturnSpan):
    if span is ReturnSpan.CL_tmCL:
        return (closes[:, 1:] - closes[:, :-1]) / closes[:, :-1]
    if span is ReturnSpan.tmOP_tmCL:
        return (closes[:, 1:] - opens[:, 1:]) / opens[:, 1:]
    return (opens[:, 1:] - closes[:, :-1]) / closes[:, :-1]


def compute_returns(data: MarketDataset, mode: ReturnMode | None = None) -> ReturnsPanel:
    """Return panel for `mode`; missing bars propagate into the mask."""
    mode = mode or ReturnMode()
    opens, closes = data.equity_panels
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = _span_returns(opens, closes, mode.span)
    if mode.basis is ReturnBasis.ExcessMarket:
        bi = data.asset_index.get(data.benchmark)
        if bi is None:
            raise ConfigError(
                f"excess-market returns need benchmark {data.benchmark!r} bars")
        bench = vals[bi]
        if not np.isfinite(bench).all():
            raise ConfigError(
                f"benchmark {data.benchmark!r} return undefined on some day")
        vals = vals - bench[None, :]
    mask = np.isfinite(vals)
    vals = np.where(mask, vals, 0.0)
    return ReturnsPanel(values=vals, mask=mask, assets=data.assets,
                        days=data.days[:-1], mode=mode)
