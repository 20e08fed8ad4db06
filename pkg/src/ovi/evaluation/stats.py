"""Performance statistics and significance machinery for P&L series.

The Sharpe ratio is annualized with sqrt(252). Its significance test
studentizes the per-day Sharpe ratio with the non-normality-adjusted
variance estimate

    var(SR) = (1 - skew * SR + (kurt - 1) * SR^2 / 4) / (T - 1)

using biased sample moment ratios (kurt is the raw, non-excess
kurtosis, 3 for a normal). Differences between two strategies' Sharpe
ratios are tested with a circular block bootstrap of the paired daily
series.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.special import ndtr

from ..errors import DegenerateFitError, DimensionError, DomainError
from ..rngutil import substream
from .portfolio import PnlSeries

ANNUALIZATION = math.sqrt(252.0)


def _as_array(p) -> np.ndarray:
    if isinstance(p, PnlSeries):
        return np.asarray(p.daily, dtype=float)
    return np.asarray(p, dtype=float)


def sharpe_ratio(p) -> float:
    """Annualized Sharpe ratio mean(P&L) * sqrt(252) / sd(P&L)."""
    x = _as_array(p)
    if len(x) < 2:
        raise DomainError("need at least 2 observations for a Sharpe ratio")
    sd = x.std(ddof=1)
    if sd == 0.0:
        raise DomainError("P&L series has zero variance")
    return float(x.mean() / sd * ANNUALIZATION)


def performance_summary(p) -> dict:
    """{sharpe_annualized, ppd, profitable_ratio} for one P&L series.

    PPD is total P&L over total dollars bet and needs the bet ledger;
    the profitable-day ratio is max(pi, 1 - pi) with pi the share of
    strictly positive days.
    """
    x = _as_array(p)
    out = {"sharpe_annualized": sharpe_ratio(x)}
    if isinstance(p, PnlSeries):
        spent = float(p.bet_totals.sum())
        if spent == 0.0:
            raise DomainError("PPD undefined: no dollars were ever bet")
        out["ppd"] = float(x.sum() / spent)
    else:
        out["ppd"] = float(x.sum() / len(x))
    pi = float(np.mean(x > 0))
    out["profitable_ratio"] = max(pi, 1.0 - pi)
    return out


def sr_test_statistics(rows: np.ndarray, literal_second_moment: bool = False):
    """Vectorized SR = 0 test over the rows of a (series, days) matrix.

    Returns (statistic, p_value) arrays; rows with zero variance or a
    non-positive variance estimate come back NaN. This is the kernel
    behind both `sr_significance_test` and the network edge tests.
    """
    x = np.asarray(rows, dtype=float)
    t = x.shape[1]
    mu = x.mean(axis=1)
    c = x - mu[:, None]
    m2 = np.mean(c * c, axis=1)
    ok = m2 > 0.0
    safe_m2 = np.where(ok, m2, 1.0)
    skew = np.mean(c ** 3, axis=1) / safe_m2 ** 1.5
    kurt = np.mean(c ** 4, axis=1) / safe_m2 ** 2
    sd = x.std(axis=1, ddof=1)
    sr = np.where(ok, mu / np.where(ok, sd, 1.0), np.nan)
    second = (2.0 * sr) if literal_second_moment else sr ** 2
    var = (1.0 - skew * sr + (kurt - 1.0) * second / 4.0) / (t - 1)
    ok &= var > 0.0
    stat = np.where(ok, sr / np.sqrt(np.where(ok, var, 1.0)), np.nan)
    pval = np.where(ok, 2.0 * (1.0 - ndtr(np.abs(stat))), np.nan)
    return stat, pval


def sr_significance_test(p, literal_second_moment: bool = False) -> dict:
    """Two-sided test of H0: SR = 0 for one P&L series.

    The statistic divides the per-day Sharpe ratio by the adjusted
    standard error above; the p-value comes from the standard normal.
    `literal_second_moment` switches the SR^2 term to 2 * SR (a printed
    variant of the estimator kept for comparability).
    """
    x = _as_array(p)
    t = len(x)
    if t < 2:
        raise DomainError("need at least 2 observations")
    if t < 30:
        warnings.warn(f"only {t} observations; the normal approximation "
                      "of the SR test is unreliable", stacklevel=2)
    if x.std(ddof=1) == 0.0:
        raise DomainError("P&L series has zero variance")
    stat, pval = sr_test_statistics(x[None, :],
                                    literal_second_moment=literal_second_moment)
    if not np.isfinite(stat[0]):
        raise DomainError("non-positive SR variance estimate")
    return {"statistic": float(stat[0]), "p_value": float(pval[0])}


def _circular_block_indices(rng, t: int, block_len: int, n_boot: int) -> np.ndarray:
    n_blocks = -(-t // block_len)
    starts = rng.integers(0, t, size=(n_boot, n_blocks))
    offsets = np.arange(block_len)
    idx = (starts[:, :, None] + offsets[None, None, :]) % t
    return idx.reshape(n_boot, n_blocks * block_len)[:, :t]


def _row_sharpes(mat: np.ndarray) -> np.ndarray:
    mu = mat.mean(axis=1)
    sd = mat.std(axis=1, ddof=1)
    out = np.zeros(len(mat))
    ok = sd > 0
    out[ok] = mu[ok] / sd[ok] * ANNUALIZATION
    return out


def sr_difference_test(p1, p2, block_len: int | None = None, n_boot: int = 2000,
                       seed: int = 0) -> dict:
    """Bootstrap test of H0: SR_1 = SR_2 on paired daily P&L series.

    Day blocks are resampled circularly (default block length
    ceil(T^(1/3))), keeping the pairing so cross-strategy dependence
    survives. The statistic studentizes the observed SR difference by
    the bootstrap standard error; the p-value counts recentered
    bootstrap differences at least as extreme as the observation.
    """
    x1, x2 = _as_array(p1), _as_array(p2)
    if x1.shape != x2.shape:
        raise DimensionError("P&L series differ in length")
    if isinstance(p1, PnlSeries) and isinstance(p2, PnlSeries) and \
            not np.array_equal(p1.days, p2.days):
        raise DimensionError("P&L series cover different days")
    t = len(x1)
    if t < 4:
        raise DomainError("series too short for a bootstrap test")
    block = block_len or int(math.ceil(t ** (1.0 / 3.0)))
    delta_obs = sharpe_ratio(x1) - sharpe_ratio(x2)

    rng = substream(seed, "sr-difference-bootstrap")
    idx = _circular_block_indices(rng, t, block, n_boot)
    deltas = _row_sharpes(x1[idx]) - _row_sharpes(x2[idx])
    se = deltas.std(ddof=1)
    stat = 0.0 if delta_obs == 0.0 else (np.inf if se == 0.0 else delta_obs / se)
    exceed = np.abs(deltas - delta_obs) >= abs(delta_obs)
    p_value = (1.0 + exceed.sum()) / (n_boot + 1.0)
    return {"statistic": float(stat), "p_value": float(p_value)}


def pca_explained_variance(panel: np.ndarray) -> np.ndarray:
    """Explained-variance ratios of the cross-asset covariance.

    Rows are assets, columns days; fully-missing rows are dropped and
    the remaining gaps treated as zeros after demeaning. Ratios come
    back non-increasing and summing to one.
    """
    x = np.asarray(panel, dtype=float)
    keep = ~np.all(~np.isfinite(x), axis=1)
    x = x[keep]
    if x.shape[0] < 2 or x.shape[1] < 2:
        raise DegenerateFitError("need at least 2 assets and 2 days")
    x = np.where(np.isfinite(x), x, np.nan)
    mu = np.nanmean(x, axis=1, keepdims=True)
    x = np.where(np.isfinite(x), x - mu, 0.0)
    cov = x @ x.T / (x.shape[1] - 1)
    eig = np.linalg.eigvalsh(cov)[::-1]
    eig = np.clip(eig, 0.0, None)
    total = eig.sum()
    if total == 0.0:
        raise DegenerateFitError("covariance has rank zero")
    return eig / total
