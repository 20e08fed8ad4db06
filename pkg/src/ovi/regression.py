"""Profit-maximizing regression on signal features.

A linear signal s = beta_0 + sum_k beta_k A_{..k} is pushed through the
soft sign

    g(x) = 2 (1 / (1 + exp(-a1 x)) - 1/2)        (tanh(x) at a1 = 2)

and soft bet sizes |g| / sum |g| so that the day-by-day profit of the
sign-following strategy becomes differentiable. With the smooth
absolute value h(x) = sqrt(x^2 + a2), the minimized objective is

    L(beta) = - sum_d sum_i f_{i,d} g(s_{i,d}) / sum_j h(g(s_{j,d}))
              + lambda * sum_{k>=1} h(beta_k)

whose exact gradient is available in closed form (the quotient rule over
the per-day denominator, plus lambda h'(beta_k) off the intercept).
Minimization uses ADAM with moment parameters (0.9, 0.999); fits are
evaluated out of sample on a sliding window of l = 500 training and
T = 100 test days.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, DimensionError, RescaleError, SolverError
from .signals import SignalPanel

ADAM_MOMENT_1 = 0.9
ADAM_MOMENT_2 = 0.999
DEFAULT_TRAIN_LEN = 500
DEFAULT_TEST_LEN = 100
DEFAULT_LAMBDA_GRID = (0.0, 1e-3, 1e-2, 1e-1)


@dataclass
class HyperParams:
    activation_sharpness: float = 10.0     # a1
    smooth_floor: float = 1e-6             # a2
    l1_weight: float = 1e-3                # lambda
    learn_rate: float = 1e-2
    moment_1: float = ADAM_MOMENT_1
    moment_2: float = ADAM_MOMENT_2
    max_iters: int = 2000
    grad_tol: float = 1e-8
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.activation_sharpness <= 0 or self.smooth_floor <= 0:
            raise ConfigError("activation sharpness and smooth floor must be positive")
        if self.l1_weight < 0:
            raise ConfigError("l1 weight must be non-negative")


@dataclass
class FeatureTensor:
    """Stacked per-(asset, day) signal features."""

    values: np.ndarray                    # (n_assets, n_days, n_features)
    feature_names: list
    assets: np.ndarray | None = None
    days: np.ndarray | None = None

    @classmethod
    def from_panels(cls, panels: list[SignalPanel]) -> "FeatureTensor":
        first = panels[0]
        for p in panels[1:]:
            if not first.aligned_with(p):
                raise DimensionError("feature panels are not aligned")
        return cls(values=np.stack([p.values for p in panels], axis=2),
                   feature_names=[p.name for p in panels],
                   assets=first.assets, days=first.days)

    @property
    def n_features(self) -> int:
        return self.values.shape[2]


def activation_g(x, alpha1: float):
    """Soft sign in (-1, 1); odd, strictly increasing, tanh at alpha1 = 2."""
    return np.tanh(0.5 * alpha1 * np.asarray(x, dtype=float))


def activation_g_prime(x, alpha1: float):
    g = activation_g(x, alpha1)
    return 0.5 * alpha1 * (1.0 - g * g)


def smooth_abs_h(x, alpha2: float):
    """sqrt(x^2 + alpha2) >= |x|, smooth everywhere, floor sqrt(alpha2)."""
    return np.sqrt(np.square(np.asarray(x, dtype=float)) + alpha2)


def smooth_abs_h_prime(x, alpha2: float):
    x = np.asarray(x, dtype=float)
    return x / np.sqrt(np.square(x) + alpha2)


def _signal(beta: np.ndarray, features: np.ndarray) -> np.ndarray:
    return beta[0] + features @ beta[1:]


def soft_pnl_objective(beta, features, returns, hp: HyperParams) -> float:
    """The penalized negative soft P&L described above."""
    beta = np.asarray(beta, dtype=float)
    a1, a2 = hp.activation_sharpness, hp.smooth_floor
    g = activation_g(_signal(beta, features), a1)
    denom = smooth_abs_h(g, a2).sum(axis=0)               # per day, > 0
    pl = (returns * g).sum(axis=0) / denom
    return float(-pl.sum() + hp.l1_weight * smooth_abs_h(beta[1:], a2).sum())


def objective_gradient(beta, features, returns, hp: HyperParams) -> np.ndarray:
    """Closed-form dL/dbeta, index 0 being the (unpenalized) intercept."""
    beta = np.asarray(beta, dtype=float)
    a1, a2 = hp.activation_sharpness, hp.smooth_floor
    s = _signal(beta, features)
    g = activation_g(s, a1)
    gp = activation_g_prime(s, a1)
    denom = smooth_abs_h(g, a2).sum(axis=0)
    inv = 1.0 / denom

    # dg/dbeta contracted with the direct (first) quotient term
    w1 = returns * gp * inv[None, :]
    grad = np.empty(len(beta))
    grad[0] = w1.sum()
    grad[1:] = np.tensordot(w1, features, axes=([0, 1], [0, 1]))

    # quotient correction through the day denominator
    coeff = (returns * g).sum(axis=0) * inv * inv         # per day
    w2 = smooth_abs_h_prime(g, a2) * gp
    corr = np.empty(len(beta))
    corr[0] = (coeff * w2.sum(axis=0)).sum()
    corr[1:] = coeff @ np.einsum("nd,ndk->dk", w2, features)
    out = -grad + corr
    out[1:] += hp.l1_weight * smooth_abs_h_prime(beta[1:], a2)
    return out


def soft_pnl_value(beta, features, returns, hp: HyperParams) -> float:
    """Total soft-bet P&L with the exact |g| bet normalization.

    Days where every soft sign is zero spend nothing and contribute
    zero. This is the out-of-sample evaluation metric (no penalty).
    """
    beta = np.asarray(beta, dtype=float)
    g = activation_g(_signal(beta, features), hp.activation_sharpness)
    denom = np.abs(g).sum(axis=0)
    ok = denom > 0
    pl = np.zeros(features.shape[1])
    pl[ok] = (returns * g).sum(axis=0)[ok] / denom[ok]
    return float(pl.sum())


def adam_minimize(value_and_grad, beta_init, hp: HyperParams):
    """Plain ADAM with bias correction; deterministic given the inputs.

    Stops at `max_iters` or when the gradient norm drops under
    `grad_tol`; aborts with SolverError if the objective or gradient
    goes non-finite.
    """
    beta = np.asarray(beta_init, dtype=float).copy()
    m = np.zeros_like(beta)
    v = np.zeros_like(beta)
    b1, b2 = hp.moment_1, hp.moment_2
    for t in range(1, hp.max_iters + 1):
        value, grad = value_and_grad(beta)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise SolverError(f"non-finite objective/gradient at iteration {t}")
        if np.linalg.norm(grad) < hp.grad_tol:
            break
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        beta = beta - hp.learn_rate * m_hat / (np.sqrt(v_hat) + hp.adam_eps)
    return beta


def _fused_value_grad(beta, features, returns, hp: HyperParams):
    """Objective and gradient sharing one forward pass (the fit hot loop)."""
    a1, a2 = hp.activation_sharpness, hp.smooth_floor
    s = _signal(beta, features)
    g = activation_g(s, a1)
    gp = 0.5 * a1 * (1.0 - g * g)
    h = smooth_abs_h(g, a2)
    denom = h.sum(axis=0)
    inv = 1.0 / denom
    day_pl = (returns * g).sum(axis=0) * inv
    value = -day_pl.sum() + hp.l1_weight * smooth_abs_h(beta[1:], a2).sum()

    w1 = returns * gp * inv[None, :]
    grad = np.empty(len(beta))
    grad[0] = w1.sum()
    grad[1:] = np.tensordot(w1, features, axes=([0, 1], [0, 1]))
    coeff = day_pl * inv
    w2 = (g / h) * gp
    corr = np.empty(len(beta))
    corr[0] = (coeff * w2.sum(axis=0)).sum()
    corr[1:] = coeff @ np.einsum("nd,ndk->dk", w2, features)
    full = -grad + corr
    full[1:] += hp.l1_weight * smooth_abs_h_prime(beta[1:], a2)
    return float(value), full


def fit_pnl_regression(features, returns, hp: HyperParams,
                       beta_init=None) -> np.ndarray:
    """Minimize the penalized objective from the zero vector."""
    features = np.asarray(features, dtype=float)
    returns = np.asarray(returns, dtype=float)
    if features.shape[:2] != returns.shape:
        raise DimensionError(
            f"features {features.shape} vs returns {returns.shape}")
    k = features.shape[2]
    beta0 = np.zeros(k + 1) if beta_init is None else np.asarray(beta_init, float)

    def value_and_grad(beta):
        return _fused_value_grad(beta, features, returns, hp)

    return adam_minimize(value_and_grad, beta0, hp)


def rescale_coefficients(beta) -> np.ndarray:
    """Divide the whole vector by the non-intercept l1 norm.

    Positive scaling leaves every signal's sign unchanged, so the
    hard-sign strategy is invariant; the scaled weights are the
    comparable quantities reported across windows.
    """
    beta = np.asarray(beta, dtype=float)
    norm = np.abs(beta[1:]).sum()
    if norm == 0.0:
        raise RescaleError("all non-intercept coefficients are zero")
    return beta / norm


@dataclass(frozen=True)
class WindowSpec:
    train_len: int = DEFAULT_TRAIN_LEN
    test_len: int = DEFAULT_TEST_LEN
    stride: int | None = None             # defaults to test_len (tiling)

    def __post_init__(self):
        if self.train_len < 1 or self.test_len < 1:
            raise ConfigError("window lengths must be >= 1")
        if self.stride is not None and self.stride < 1:
            raise ConfigError("stride must be >= 1")

    @property
    def step(self) -> int:
        return self.stride if self.stride is not None else self.test_len


@dataclass
class WindowResult:
    end_index: int                         # last training day (0-based)
    end_day: object
    lam: float
    beta: np.ndarray                       # fitted, unscaled
    beta_scaled: np.ndarray | None         # None when rescaling is undefined
    in_sample_ppd: float
    out_sample_ppd: float


def sliding_window_backtest(tensor: FeatureTensor, returns, window: WindowSpec,
                            hp: HyperParams,
                            lambda_grid=None) -> list[WindowResult]:
    """Fit on each l-day window, evaluate soft P&L on the next T days.

    When `lambda_grid` has several values the penalty is chosen per
    window on a 20% validation tail of the training block (training
    data only), then the model is refit on the full block. PPD figures
    are per-day averages of the soft-bet P&L, in sample and out.
    """
    a = np.asarray(tensor.values, dtype=float)
    f = np.asarray(returns, dtype=float)
    if a.shape[:2] != f.shape:
        raise DimensionError(f"features {a.shape} vs returns {f.shape}")
    n_days = f.shape[1]
    l, t = window.train_len, window.test_len
    if n_days < l + t:
        raise ConfigError(f"need at least {l + t} days, have {n_days}")
    grid = tuple(lambda_grid) if lambda_grid is not None else (hp.l1_weight,)

    results = []
    for end in range(l - 1, n_days - t, window.step):
        tr = slice(end - l + 1, end + 1)
        te = slice(end + 1, end + 1 + t)
        lam = grid[0]
        if len(grid) > 1:
            head = slice(tr.start, tr.start + int(l * 0.8))
            tail = slice(tr.start + int(l * 0.8), tr.stop)
            best = -np.inf
            for cand in grid:
                hp_c = _with_lambda(hp, cand)
                beta_c = fit_pnl_regression(a[:, head], f[:, head], hp_c)
                score = soft_pnl_value(beta_c, a[:, tail], f[:, tail], hp_c)
                if score > best:
                    best, lam = score, cand
        hp_w = _with_lambda(hp, lam)
        beta = fit_pnl_regression(a[:, tr], f[:, tr], hp_w)
        try:
            beta_scaled = rescale_coefficients(beta)
        except RescaleError:
            beta_scaled = None
        results.append(WindowResult(
            end_index=end,
            end_day=None if tensor.days is None else tensor.days[end],
            lam=lam,
            beta=beta,
            beta_scaled=beta_scaled,
            in_sample_ppd=soft_pnl_value(beta, a[:, tr], f[:, tr], hp_w) / l,
            out_sample_ppd=soft_pnl_value(beta, a[:, te], f[:, te], hp_w) / t,
        ))
    return results


def _with_lambda(hp: HyperParams, lam: float) -> HyperParams:
    return HyperParams(activation_sharpness=hp.activation_sharpness,
                       smooth_floor=hp.smooth_floor, l1_weight=lam,
                       learn_rate=hp.learn_rate, moment_1=hp.moment_1,
                       moment_2=hp.moment_2, max_iters=hp.max_iters,
                       grad_tol=hp.grad_tol, adam_eps=hp.adam_eps, seed=hp.seed)


def write_coefficient_paths(results: list[WindowResult], feature_names, path) -> None:
    """CSV of window_end_date,feature_id,beta (the rescaled weights)."""
    rows = []
    for r in results:
        beta = r.beta_scaled if r.beta_scaled is not None else r.beta
        day = "" if r.end_day is None else pd.Timestamp(r.end_day).strftime("%Y-%m-%d")
        rows.append({"window_end_date": day, "feature_id": "intercept",
                     "beta": beta[0]})
        for k, name in enumerate(feature_names):
            rows.append({"window_end_date": day, "feature_id": name,
                         "beta": beta[k + 1]})
    pd.DataFrame(rows, columns=["window_end_date", "feature_id", "beta"]) \
        .to_csv(path, index=False, float_format="%.12g")


def write_window_metrics(results: list[WindowResult], path) -> None:
    rows = [{"window_end_date": ""
             if r.end_day is None else pd.Timestamp(r.end_day).strftime("%Y-%m-%d"),
             "in_ppd": r.in_sample_ppd, "out_ppd": r.out_sample_ppd}
            for r in results]
    pd.DataFrame(rows, columns=["window_end_date", "in_ppd", "out_ppd"]) \
        .to_csv(path, index=False, float_format="%.12g")
