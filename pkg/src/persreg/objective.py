"""Loss and regularizer values and (sub)gradients, plus the composite
objective consumed by the optimizer.

All gradients are closed form.  The distance-matching terms iterate ordered
neighbor pairs sorted ascending by (i, j), accumulate covariate columns and
latent dimensions in ascending order, and scatter with unbuffered adds.
That fixed arithmetic order is a contract: a brute-force oracle that walks
pairs the same way reproduces every value bit for bit, and runs are
reproducible regardless of how the pair list was discovered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metric import DistanceCache, auto_radius, neighbor_pairs, neighbor_sets
from .model import (
    REGRESSION,
    Dataset,
    Factorization,
    HyperParams,
    coefficient_matrix,
    validate_task,
)


class NumericalError(RuntimeError):
    """Non-finite value encountered; carries the offending sample index."""

    def __init__(self, message: str, sample: int | None = None, iteration=None):
        super().__init__(message)
        self.sample = sample
        self.iteration = iteration


@dataclass(frozen=True)
class GradientBundle:
    """Composite objective value with the three gradient blocks."""

    value: float
    grad_loadings: np.ndarray  # q x n
    grad_dictionary: np.ndarray  # q x p
    grad_weights: np.ndarray  # k


def _logistic_value(z: float, y: float) -> float:
    # log(1 + e^z) - y z, written to avoid overflow for |z| large
    return max(z, 0.0) - y * z + np.log1p(np.exp(-abs(z)))


def _sigmoid_scalar(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    ez = np.exp(z)
    return ez / (1.0 + ez)


def _check_label(y: float):
    if y not in (0.0, 1.0):
        raise ValueError(f"classification response must be 0 or 1, got {y}")


def predictive_loss(x, y, coef, task: str) -> float:
    """Squared error for regression, stabilized log loss for classification."""
    x = np.asarray(x, dtype=float)
    coef = np.asarray(coef, dtype=float)
    validate_task(task)
    z = float(x @ coef)
    if task == REGRESSION:
        r = float(y) - z
        return r * r
    _check_label(float(y))
    return float(_logistic_value(z, float(y)))


def loss_subgradient(x, y, coef, task: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    coef = np.asarray(coef, dtype=float)
    validate_task(task)
    z = float(x @ coef)
    if task == REGRESSION:
        return -2.0 * (float(y) - z) * x
    _check_label(float(y))
    return (_sigmoid_scalar(z) - float(y)) * x


def batch_losses(X, y, coefficients, task: str) -> np.ndarray:
    """Per-sample losses for coefficient columns (p x n) against (n, p) data."""
    z = np.einsum("ij,ji->i", X, coefficients)
    if task == REGRESSION:
        r = y - z
        return r * r
    return np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))


def batch_loss_subgradients(X, y, coefficients, task: str) -> np.ndarray:
    """Loss subgradients as a p x n matrix (column i for sample i)."""
    z = np.einsum("ij,ji->i", X, coefficients)
    if task == REGRESSION:
        scale = -2.0 * (y - z)
    else:
        pos = z >= 0
        sig = np.empty_like(z)
        sig[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        sig[~pos] = ez / (1.0 + ez)
        scale = sig - y
    return X.T * scale[None, :]


def l1_term(coef, strength: float) -> tuple:
    """Value and the chosen subgradient of the l1 penalty.

    The subgradient is exactly zero at zero coordinates, which is the choice
    the center-of-mass analysis assumes.
    """
    if strength < 0:
        raise ValueError("l1 strength must be >= 0")
    coef = np.asarray(coef, dtype=float)
    return strength * float(np.sum(np.abs(coef))), strength * np.sign(coef)


def _pair_mismatch(loadings, weights, cache: DistanceCache, i_idx, j_idx):
    """rho(i,j) - ||Z_i - Z_j||^2 per ordered pair, in the canonical order."""
    rho = cache.weighted_pairs(weights, i_idx, j_idx)
    sq = np.zeros(len(i_idx), dtype=float)
    for d in range(loadings.shape[0]):
        diff = loadings[d][i_idx] - loadings[d][j_idx]
        sq += diff * diff
    return rho - sq


def distance_match_values(loadings, weights, cache: DistanceCache, sets, strength):
    """Per-sample distance-matching penalties (length n, entries >= 0).

    Entry i is (strength / 2) times the sum over i's neighbor ball of the
    squared gap between the learned covariate distance and the squared
    loading distance.
    """
    loadings = np.asarray(loadings, dtype=float)
    n = loadings.shape[1]
    i_idx, j_idx = neighbor_pairs(sets)
    per_sample = np.zeros(n, dtype=float)
    if strength == 0.0 or len(i_idx) == 0:
        return per_sample
    mis = _pair_mismatch(loadings, weights, cache, i_idx, j_idx)
    np.add.at(per_sample, i_idx, mis * mis)
    return 0.5 * strength * per_sample


def distance_match_gradients(loadings, weights, cache: DistanceCache, sets, strength):
    """Gradients of the summed distance-matching penalty.

    Returns (grad_loadings q x n, grad_weights k).  Column i collects
    -2 * strength * mismatch * (Z_i - Z_j) from its own ball plus the equal
    cross terms from balls it belongs to; all i-side contributions are
    scattered before the j-side ones.  The columns sum to zero by the
    antisymmetry of the pair terms.
    """
    loadings = np.asarray(loadings, dtype=float)
    weights = np.asarray(weights, dtype=float)
    q, n = loadings.shape
    grad_loadings = np.zeros((q, n), dtype=float)
    grad_weights = np.zeros(cache.width, dtype=float)
    if strength == 0.0:
        return grad_loadings, grad_weights
    i_idx, j_idx = neighbor_pairs(sets)
    if len(i_idx) == 0:
        return grad_loadings, grad_weights
    mis = _pair_mismatch(loadings, weights, cache, i_idx, j_idx)
    coeff = -2.0 * strength * mis
    for d in range(q):
        contrib = coeff * (loadings[d][i_idx] - loadings[d][j_idx])
        np.add.at(grad_loadings[d], i_idx, contrib)
        np.add.at(grad_loadings[d], j_idx, -contrib)
    per_sample = np.zeros(n, dtype=float)
    for idx in range(cache.width):
        per_sample[:] = 0.0
        np.add.at(per_sample, i_idx, mis * cache.distances[idx][i_idx, j_idx])
        grad_weights[idx] = strength * float(np.sum(per_sample))
    return grad_loadings, grad_weights


RADIUS_FOR_SINGLETON = 1e-12


def resolve_radius(loadings, hyper: HyperParams) -> float:
    """Fixed radius if configured, otherwise the automatic choice with the
    neighbor target clipped to n - 1."""
    if hyper.radius is not None:
        return float(hyper.radius)
    n = loadings.shape[1]
    if n < 2:
        return RADIUS_FOR_SINGLETON
    target = min(float(hyper.target_neighbors), float(n - 1))
    return auto_radius(loadings, target)


def composite_objective(
    fact: Factorization,
    weights,
    dataset: Dataset,
    cache: DistanceCache,
    hyper: HyperParams,
    sets=None,
) -> GradientBundle:
    """Value and gradients of the full training objective.

    The objective sums, over samples, the predictive loss, the l1 penalty on
    the implied coefficients, and the distance-matching penalty, plus the
    anchor term pulling the metric weights toward one.  Neighbor sets are
    derived from the current loadings unless supplied.

    The dictionary gradient has no distance-matching contribution: that
    penalty depends on the loadings and weights only.
    """
    weights = np.asarray(weights, dtype=float)
    X, y, task = dataset.predictors, dataset.responses, dataset.task
    coefficients = coefficient_matrix(fact)

    losses = batch_losses(X, y, coefficients, task)
    if not np.all(np.isfinite(losses)):
        bad = int(np.flatnonzero(~np.isfinite(losses))[0])
        raise NumericalError(f"non-finite loss for sample {bad}", sample=bad)

    loss_grads = batch_loss_subgradients(X, y, coefficients, task)
    penalty_value = hyper.l1 * float(np.sum(np.abs(coefficients)))
    penalty_grads = hyper.l1 * np.sign(coefficients)
    data_grads = loss_grads + penalty_grads  # p x n

    if sets is None:
        if dataset.n >= 2 and hyper.distance_match > 0.0:
            sets = neighbor_sets(fact.loadings, resolve_radius(fact.loadings, hyper))
        else:
            sets = [np.empty(0, dtype=np.int64) for _ in range(dataset.n)]

    match_vals = distance_match_values(
        fact.loadings, weights, cache, sets, hyper.distance_match
    )
    match_gz, match_gw = distance_match_gradients(
        fact.loadings, weights, cache, sets, hyper.distance_match
    )

    anchor_diff = weights - 1.0
    value = (
        float(np.sum(losses))
        + penalty_value
        + float(np.sum(match_vals))
        + hyper.weights_anchor * float(anchor_diff @ anchor_diff)
    )
    grad_loadings = fact.dictionary @ data_grads + match_gz
    grad_dictionary = fact.loadings @ data_grads.T
    grad_weights = match_gw + 2.0 * hyper.weights_anchor * anchor_diff

    if not (
        np.isfinite(value)
        and np.all(np.isfinite(grad_loadings))
        and np.all(np.isfinite(grad_dictionary))
        and np.all(np.isfinite(grad_weights))
    ):
        raise NumericalError("non-finite gradient in composite objective")
    return GradientBundle(
        value=value,
        grad_loadings=grad_loadings,
        grad_dictionary=grad_dictionary,
        grad_weights=grad_weights,
    )
