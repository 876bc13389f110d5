"""Elastic-net population estimator.

Used both to anchor personalized training and as the comparison baseline.
Solved by proximal gradient descent with a backtracking (halving) line
search; the solver insists on a small first-order optimality residual
because downstream center-of-mass bookkeeping relies on the population
coefficients being stationary for the averaged loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CLASSIFICATION, REGRESSION, Dataset, validate_task


class ElasticNetConvergenceError(RuntimeError):
    """Raised when the solver runs out of iterations; carries the last
    iterate and its stationarity residual."""

    def __init__(self, coef: np.ndarray, residual: float, max_iters: int):
        super().__init__(
            f"elastic net did not reach the target residual within {max_iters} "
            f"iterations (residual {residual:.3e})"
        )
        self.coef = coef
        self.residual = residual


@dataclass(frozen=True)
class ElasticNetConfig:
    l1: float = 1e-1
    l2: float = 0.0
    max_iters: int = 200_000
    rel_tol: float = 1e-8
    fit_task: str = REGRESSION

    def __post_init__(self):
        if self.l1 < 0 or self.l2 < 0:
            raise ValueError("regularization strengths must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be > 0")
        validate_task(self.fit_task)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _smooth_value(X, y, coef, l2, task) -> float:
    z = X @ coef
    if task == REGRESSION:
        resid = y - z
        data = float(np.mean(resid * resid))
    else:
        data = float(np.mean(np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))))
    return data + l2 * float(coef @ coef)


def _smooth_gradient(X, y, coef, l2, task) -> np.ndarray:
    z = X @ coef
    if task == REGRESSION:
        g = X.T @ (-2.0 * (y - z)) / X.shape[0]
    else:
        g = X.T @ (_sigmoid(z) - y) / X.shape[0]
    return g + 2.0 * l2 * coef


def _soft_threshold(v: np.ndarray, amount: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - amount, 0.0)


def stationarity_residual(X, y, coef, cfg: ElasticNetConfig) -> float:
    """Infinity-norm distance of zero from the objective's subdifferential."""
    g = _smooth_gradient(X, y, coef, cfg.l2, cfg.fit_task)
    res = np.where(
        coef != 0.0,
        np.abs(g + cfg.l1 * np.sign(coef)),
        np.maximum(np.abs(g) - cfg.l1, 0.0),
    )
    return float(np.max(res)) if res.size else 0.0


def objective_value(X, y, coef, cfg: ElasticNetConfig) -> float:
    return _smooth_value(X, y, coef, cfg.l2, cfg.fit_task) + cfg.l1 * float(
        np.sum(np.abs(coef))
    )


def fit_population(dataset: Dataset, cfg: ElasticNetConfig, on_iterate=None) -> np.ndarray:
    """Fit the shared coefficient vector by proximal gradient descent.

    Deterministic: starts from zero, backtracks by halving the step whenever
    the quadratic upper bound fails, and stops once the stationarity
    residual drops to ``cfg.rel_tol`` in infinity norm.  ``on_iterate``,
    when given, is called with the full objective value after every
    accepted step.
    """
    X = dataset.predictors
    y = dataset.responses
    coef = np.zeros(dataset.p, dtype=float)
    step = 1.0
    value = _smooth_value(X, y, coef, cfg.l2, cfg.fit_task)
    for _ in range(cfg.max_iters):
        if stationarity_residual(X, y, coef, cfg) <= cfg.rel_tol:
            return coef
        grad = _smooth_gradient(X, y, coef, cfg.l2, cfg.fit_task)
        while True:
            trial = _soft_threshold(coef - step * grad, step * cfg.l1)
            delta = trial - coef
            trial_value = _smooth_value(X, y, trial, cfg.l2, cfg.fit_task)
            bound = value + float(grad @ delta) + float(delta @ delta) / (2.0 * step)
            if trial_value <= bound + 1e-15:
                break
            step *= 0.5
            if step < 1e-18:
                break
        coef, value = trial, trial_value
        step *= 1.1  # gentle growth so halving stays responsive
        if on_iterate is not None:
            on_iterate(value + cfg.l1 * float(np.sum(np.abs(coef))))
    residual = stationarity_residual(X, y, coef, cfg)
    if residual <= cfg.rel_tol:
        return coef
    raise ElasticNetConvergenceError(coef, residual, cfg.max_iters)


def predict_population(coef: np.ndarray, x, task: str):
    """Linear response for regression, sigmoid of it for classification.

    Accepts a single predictor row or an (m, p) matrix.
    """
    coef = np.asarray(coef, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != coef.shape[0]:
        raise ValueError(
            f"predictor length {x.shape[-1]} does not match coefficients "
            f"({coef.shape[0]})"
        )
    z = x @ coef
    validate_task(task)
    if task == CLASSIFICATION:
        return _sigmoid(np.atleast_1d(z))[0] if z.ndim == 0 else _sigmoid(z)
    return float(z) if z.ndim == 0 else z
