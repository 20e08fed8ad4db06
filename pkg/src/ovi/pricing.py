"""Black-Scholes valuation, Greeks, implied volatility and moneyness.

European options without dividends:

    Call = S Phi(d1) - K e^{-r tau} Phi(d2)
    Put  = K e^{-r tau} Phi(-d2) - S Phi(-d1)
    d1   = (log(S/K) + (r + sigma^2/2) tau) / (sigma sqrt(tau))
    d2   = d1 - sigma sqrt(tau)

Theta is reported as -dP/dtau (price decay per year of remaining
maturity). Implied volatility is solved by bisection on a fixed
bracket, which converges unconditionally because the price is strictly
increasing in sigma. All functions are pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, NoSolutionError, SolverError
from .market.types import OptionSide

IV_LOWER = 1e-4
IV_UPPER = 5.0
IV_MAX_ITER = 128

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _phi(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


@dataclass(frozen=True)
class BsInputs:
    """Inputs of the pricing formulas; tau in years, rates/vols annualized."""

    spot: float
    strike: float
    tau: float
    rate: float
    sigma: float
    option_side: OptionSide

    def __post_init__(self):
        if self.spot <= 0 or self.strike <= 0:
            raise DomainError("spot and strike must be positive")
        if self.tau <= 0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        if self.sigma <= 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class GreeksResult:
    price: float
    delta: float
    gamma: float
    theta: float
    vega: float
    rho: float


@dataclass(frozen=True)
class IvResult:
    sigma_implied: float
    iterations: int
    residual: float


def _d1_d2(spot, strike, tau, rate, sigma):
    sq = sigma * np.sqrt(tau)
    d1 = (np.log(spot / strike) + (rate + 0.5 * sigma * sigma) * tau) / sq
    return d1, d1 - sq


def _price_raw(spot, strike, tau, rate, sigma, is_call):
    """Array-safe price kernel; no domain checks."""
    d1, d2 = _d1_d2(spot, strike, tau, rate, sigma)
    disc = np.exp(-rate * tau)
    call = spot * ndtr(d1) - strike * disc * ndtr(d2)
    put = strike * disc * ndtr(-d2) - spot * ndtr(-d1)
    return np.where(is_call, call, put)


def bs_price(inputs: BsInputs) -> float:
    """Black-Scholes price of a European call or put."""
    return float(_price_raw(inputs.spot, inputs.strike, inputs.tau, inputs.rate,
                            inputs.sigma, inputs.option_side is OptionSide.Call))


def bs_greeks(inputs: BsInputs) -> GreeksResult:
    """Price plus Delta, Gamma, Theta, Vega and Rho.

    Delta = dP/dS, Gamma = d2P/dS2, Vega = dP/dsigma, Rho = dP/dr and
    Theta = -dP/dtau, all in natural units (per 1.0 of the input).
    """
    s, k, tau, r, sig = (inputs.spot, inputs.strike, inputs.tau,
                         inputs.rate, inputs.sigma)
    d1, d2 = _d1_d2(s, k, tau, r, sig)
    disc = math.exp(-r * tau)
    pdf1 = float(_phi(d1))
    sqrt_tau = math.sqrt(tau)
    gamma = pdf1 / (s * sig * sqrt_tau)
    vega = s * pdf1 * sqrt_tau
    decay = s * pdf1 * sig / (2.0 * sqrt_tau)
    if inputs.option_side is OptionSide.Call:
        delta = float(ndtr(d1))
        theta = -decay - r * k * disc * float(ndtr(d2))
        rho = k * tau * disc * float(ndtr(d2))
    else:
        delta = float(ndtr(d1)) - 1.0
        theta = -decay + r * k * disc * float(ndtr(-d2))
        rho = -k * tau * disc * float(ndtr(-d2))
    return GreeksResult(price=bs_price(inputs), delta=delta, gamma=gamma,
                        theta=theta, vega=vega, rho=rho)


def no_arbitrage_band(spot, strike, tau, rate, is_call):
    """(lower, upper) price bounds attainable by some sigma in (0, inf)."""
    disc_strike = strike * np.exp(-rate * tau)
    if is_call:
        return max(spot - disc_strike, 0.0), spot
    return max(disc_strike - spot, 0.0), disc_strike


def implied_volatility(price_obs: float, spot: float, strike: float, tau: float,
                       rate: float, option_side: OptionSide,
                       tol: float | None = None) -> IvResult:
    """Invert the pricing formula for sigma by bisection on [1e-4, 5].

    Raises NoSolutionError when `price_obs` lies outside the band the
    bracket can reach, SolverError when the residual tolerance is not
    met within the iteration budget.
    """
    if spot <= 0 or strike <= 0:
        raise DomainError("spot and strike must be positive")
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    tol = 1e-8 * strike if tol is None else tol
    is_call = option_side is OptionSide.Call
    lower, upper = no_arbitrage_band(spot, strike, tau, rate, is_call)
    if not lower <= price_obs < upper:
        raise NoSolutionError(
            f"price {price_obs} outside no-arbitrage band [{lower}, {upper})")
    p_lo = _price_raw(spot, strike, tau, rate, IV_LOWER, is_call)
    p_hi = _price_raw(spot, strike, tau, rate, IV_UPPER, is_call)
    if price_obs < p_lo or price_obs > p_hi:
        raise NoSolutionError(
            f"price {price_obs} not bracketed by sigma in [{IV_LOWER}, {IV_UPPER}]")

    lo, hi = IV_LOWER, IV_UPPER
    mid, resid = lo, p_lo - price_obs
    iterations = 0
    for iterations in range(1, IV_MAX_ITER + 1):
        mid = 0.5 * (lo + hi)
        resid = float(_price_raw(spot, strike, tau, rate, mid, is_call)) - price_obs
        if resid > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-14 and abs(resid) <= tol:
            break
    if abs(resid) > tol:
        raise SolverError(
            f"implied volatility did not converge: residual {resid} after "
            f"{iterations} iterations")
    return IvResult(sigma_implied=mid, iterations=iterations, residual=resid)


def implied_volatility_grid(price_obs, spot, strike, tau, rate, is_call,
                            n_iter: int = 80):
    """Vectorized bisection used for bulk contract tables.

    Entries whose price is outside the attainable band come back NaN
    instead of raising; callers count those as inversion failures.
    """
    price_obs = np.asarray(price_obs, dtype=float)
    spot = np.broadcast_to(np.asarray(spot, dtype=float), price_obs.shape)
    strike = np.broadcast_to(np.asarray(strike, dtype=float), price_obs.shape)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), price_obs.shape)
    rate = np.broadcast_to(np.asarray(rate, dtype=float), price_obs.shape)
    is_call = np.broadcast_to(np.asarray(is_call, dtype=bool), price_obs.shape)

    valid = (spot > 0) & (strike > 0) & (tau > 0) & np.isfinite(price_obs)
    with np.errstate(all="ignore"):
        p_lo = _price_raw(spot, strike, tau, rate, IV_LOWER, is_call)
        p_hi = _price_raw(spot, strike, tau, rate, IV_UPPER, is_call)
    valid &= (price_obs >= p_lo) & (price_obs <= p_hi)

    lo = np.full(price_obs.shape, IV_LOWER)
    hi = np.full(price_obs.shape, IV_UPPER)
    with np.errstate(all="ignore"):
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            above = _price_raw(spot, strike, tau, rate, mid, is_call) > price_obs
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
    out = 0.5 * (lo + hi)
    out[~valid] = np.nan
    return out


def standardized_moneyness(inputs: BsInputs) -> float:
    """log(S e^{r tau} / K) / (sigma sqrt(tau)), sign-flipped for puts.

    Zero exactly at the forward at-the-money point K = S e^{r tau}.
    """
    mon = math.log(inputs.spot * math.exp(inputs.rate * inputs.tau) / inputs.strike)
    mon /= inputs.sigma * math.sqrt(inputs.tau)
    return mon if inputs.option_side is OptionSide.Call else -mon
