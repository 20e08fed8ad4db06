"""Discrete power-law tail fitting with a bootstrap goodness-of-fit test.

The tail model P(X = x) = x^(-alpha) / zeta(alpha, xmin) for integer
x >= xmin is fit by maximum likelihood; xmin is chosen to minimize the
Kolmogorov-Smirnov distance between the fitted and empirical tail
distributions. The goodness-of-fit p-value is obtained by a
semi-parametric bootstrap: replicates draw the tail from the fitted
model and the body by resampling the sub-xmin data, are refit from
scratch, and their KS distances are compared against the observed one.
Power-law plausibility is conventionally rejected below p = 0.1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import zeta

from .errors import DegenerateFitError, DomainError
from .rngutil import substream

ALPHA_BOUNDS = (1.000001, 12.0)
MIN_TAIL = 4
MAX_REQUIRED_TAIL = 250
XMIN_CANDIDATE_CAP = 25
_SAMPLER_EPS = 1e-9
_SAMPLER_MAX_SUPPORT = 4_000_000


@dataclass
class PowerLawFit:
    alpha: float
    xmin: int
    ks: float
    ntail: int


def _mle_alpha(tail: np.ndarray, xmin: int) -> float:
    log_sum = np.log(tail).sum()
    n = len(tail)

    def nll(a):
        return n * np.log(zeta(a, xmin)) + a * log_sum

    res = minimize_scalar(nll, bounds=ALPHA_BOUNDS, method="bounded")
    return float(res.x)


def _tail_cdf(xs: np.ndarray, alpha: float, xmin: int) -> np.ndarray:
    """P(X <= x) for integer x >= xmin under the fitted tail model."""
    z0 = zeta(alpha, xmin)
    return 1.0 - zeta(alpha, xs + 1.0) / z0


def _ks_distance(tail: np.ndarray, alpha: float, xmin: int) -> float:
    u, counts = np.unique(tail, return_counts=True)
    ecdf = np.cumsum(counts) / len(tail)
    cdf_at = _tail_cdf(u.astype(float), alpha, xmin)
    d = np.abs(ecdf - cdf_at).max()
    # on the flat stretch before each observed value the model keeps rising
    below = np.abs(np.r_[0.0, ecdf[:-1]] - _tail_cdf(u - 1.0, alpha, xmin))
    below[u - 1 < xmin] = 0.0
    return float(max(d, below.max()))


def fit_discrete_powerlaw(values, xmin: int | None = None,
                          candidate_cap: int = XMIN_CANDIDATE_CAP) -> PowerLawFit:
    """Fit (alpha, xmin) to the positive integer tail of `values`.

    With `xmin` given only alpha is estimated; otherwise every distinct
    value (thinned to at most `candidate_cap` candidates) is tried and
    the KS-minimizing cutoff wins.
    """
    x = np.asarray(values)
    x = x[np.isfinite(x)].astype(np.int64)
    x = x[x >= 1]
    if len(np.unique(x)) < 3:
        raise DegenerateFitError(
            "need at least 3 distinct positive values for a power-law fit")
    if xmin is not None:
        tail = x[x >= xmin]
        if len(tail) < MIN_TAIL:
            raise DegenerateFitError(f"fewer than {MIN_TAIL} tail points")
        alpha = _mle_alpha(tail, xmin)
        return PowerLawFit(alpha=alpha, xmin=int(xmin),
                           ks=_ks_distance(tail, alpha, xmin), ntail=len(tail))

    # the cutoff must leave a tail with real mass, otherwise a handful of
    # top points makes any distribution look like a power law
    ntail_min = max(MIN_TAIL, min(MAX_REQUIRED_TAIL, int(np.ceil(0.05 * len(x)))))
    candidates = np.unique(x)
    keep = [int(c) for c in candidates if (x >= c).sum() >= ntail_min]
    if not keep:
        raise DegenerateFitError("no cutoff leaves enough tail points")
    if len(keep) > candidate_cap:
        pick = np.linspace(0, len(keep) - 1, candidate_cap).round().astype(int)
        keep = [keep[i] for i in np.unique(pick)]
    best = None
    for c in keep:
        tail = x[x >= c]
        if len(np.unique(tail)) < 2:
            continue
        alpha = _mle_alpha(tail, int(c))
        ks = _ks_distance(tail, alpha, int(c))
        if best is None or ks < best.ks:
            best = PowerLawFit(alpha=alpha, xmin=int(c), ks=ks, ntail=len(tail))
    if best is None:
        raise DegenerateFitError("tail too concentrated for a power-law fit")
    return best


class DiscretePowerLawSampler:
    """Exact inverse-CDF sampler for the fitted tail (support capped)."""

    def __init__(self, alpha: float, xmin: int):
        if alpha <= 1.0:
            raise DomainError("power-law exponent must exceed 1")
        z0 = zeta(alpha, xmin)
        # support cap from the integral tail bound, bounded for memory
        cap = (_SAMPLER_EPS * (alpha - 1.0) * z0) ** (1.0 / (1.0 - alpha))
        cap = int(min(max(cap, xmin + 10), xmin + _SAMPLER_MAX_SUPPORT))
        xs = np.arange(xmin, cap + 1, dtype=float)
        pmf = xs ** (-alpha) / z0
        cdf = np.cumsum(pmf)
        cdf /= cdf[-1]
        self._cdf = cdf
        self._xmin = xmin

    def sample(self, rng, size: int) -> np.ndarray:
        u = rng.random(size)
        return self._xmin + np.searchsorted(self._cdf, u)


def powerlaw_degree_test(degrees, n_boot: int = 1000, seed: int = 0,
                         candidate_cap: int = XMIN_CANDIDATE_CAP) -> dict:
    """Goodness-of-fit test of the power-law tail hypothesis on degrees.

    Returns {alpha, xmin, ks, p_value, ntail}; small p (< 0.1 by
    convention) rejects the power law.
    """
    x = np.asarray(degrees)
    x = x[np.isfinite(x)].astype(np.int64)
    nonzero = x[x >= 1]
    if len(nonzero) < 10:
        warnings.warn(f"only {len(nonzero)} nonzero degrees; the test has "
                      "little power", stacklevel=2)
    fit = fit_discrete_powerlaw(x, candidate_cap=candidate_cap)
    body = nonzero[nonzero < fit.xmin]
    n = len(nonzero)
    p_tail = fit.ntail / n
    sampler = DiscretePowerLawSampler(fit.alpha, fit.xmin)
    rng = substream(seed, "powerlaw-gof-bootstrap")

    exceed = 0
    for _ in range(n_boot):
        n_tail = rng.binomial(n, p_tail) if len(body) else n
        synth_tail = sampler.sample(rng, n_tail)
        if len(body) and n - n_tail > 0:
            synth = np.concatenate([synth_tail,
                                    rng.choice(body, size=n - n_tail)])
        else:
            synth = synth_tail
        try:
            refit = fit_discrete_powerlaw(synth, candidate_cap=candidate_cap)
        except DegenerateFitError:
            continue
        if refit.ks >= fit.ks:
            exceed += 1
    p_value = (exceed + 1.0) / (n_boot + 1.0)
    return {"alpha": fit.alpha, "xmin": fit.xmin, "ks": fit.ks,
            "p_value": float(p_value), "ntail": fit.ntail}
