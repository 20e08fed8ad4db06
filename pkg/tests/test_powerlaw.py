"""Discrete power-law fit and its bootstrap goodness-of-fit calibration."""

import numpy as np
import pytest

from ovi.errors import DegenerateFitError
from ovi.powerlaw import (
    DiscretePowerLawSampler, fit_discrete_powerlaw, powerlaw_degree_test,
)
from ovi.rngutil import substream


def test_degenerate_samples_raise():
    with pytest.raises(DegenerateFitError):
        fit_discrete_powerlaw(np.full(100, 7))
    with pytest.raises(DegenerateFitError):
        fit_discrete_powerlaw(np.array([1, 2] * 50))
    with pytest.raises(DegenerateFitError):
        powerlaw_degree_test(np.array([3, 3, 5] * 20), n_boot=10)


def test_few_nonzero_degrees_warn():
    rng = substream(0, "few")
    data = np.concatenate([np.zeros(50, dtype=int),
                           rng.integers(1, 30, size=8)])
    with pytest.warns(UserWarning, match="nonzero"):
        try:
            powerlaw_degree_test(data, n_boot=5)
        except DegenerateFitError:
            pass


def test_mle_recovers_the_exponent():
    rng = substream(1, "mle")
    sampler = DiscretePowerLawSampler(2.5, 2)
    alphas = []
    for _ in range(10):
        fit = fit_discrete_powerlaw(sampler.sample(rng, 4000), xmin=2)
        alphas.append(fit.alpha)
    assert np.mean(alphas) == pytest.approx(2.5, abs=0.05)


def test_self_consistency_power_law_rarely_rejected():
    rng = substream(2, "selfcons")
    sampler = DiscretePowerLawSampler(2.5, 1)
    keep = 0
    trials = 50
    for i in range(trials):
        data = sampler.sample(rng, 2000)
        res = powerlaw_degree_test(data, n_boot=60, seed=i)
        keep += res["p_value"] >= 0.1
    assert keep >= int(0.8 * trials)


def test_binomial_degrees_strongly_rejected():
    rng = substream(3, "misspec")
    trials = 50
    rejected = 0
    for i in range(trials):
        data = rng.binomial(2000, 0.05, size=2000)
        res = powerlaw_degree_test(data, n_boot=60, seed=1000 + i)
        rejected += res["p_value"] < 0.1
    assert rejected >= int(0.8 * trials)
