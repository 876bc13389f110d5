"""Training loop: population-anchored initialization, factorized subgradient
descent with personalized learning rates and multiplicative decay.

Two numerical safeguards sit on top of the raw update rules, both inactive
on well-scaled problems and both only ever shrinking a step:

* the metric-weight step is rate-limited by the curvature of the
  distance-matching term, which is an exact quadratic in the weights; the
  raw global rate overshoots catastrophically when the match strength times
  the number of neighbor pairs is large,
* the loading block backs off by one shared scalar whenever its largest
  per-sample step would exceed the neighbor-ball radius, since such a step
  invalidates the neighbor structure the gradient was built on.

Neither safeguard can increase a step, and the backoff rescales every
sample equally, so the center-of-mass bookkeeping (the per-iteration bound
and its accumulated version, checked in instrumented runs) survives them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .metric import DistanceCache, neighbor_pairs, neighbor_sets, precompute_cache
from .model import (
    REGRESSION,
    Dataset,
    Factorization,
    HyperParams,
    TrainedModel,
    center_of_mass,
    coefficient_matrix,
)
from .objective import NumericalError, composite_objective, resolve_radius
from .population import ElasticNetConfig, fit_population


@dataclass(frozen=True)
class TrainState:
    """Optimizer state between iterations (immutable)."""

    factorization: Factorization
    weights: np.ndarray
    population_coef: np.ndarray
    iteration: int
    last_value: float | None
    converged: bool = False
    mean_neighbors: float = 0.0
    radius_used: float | None = None


def learning_rate(hyper: HyperParams, iteration: int) -> float:
    """Global rate at an iteration: lr_init * lr_decay ** iteration."""
    return hyper.lr_init * hyper.lr_decay**iteration


def initialize(dataset: Dataset, hyper: HyperParams, population_coef, seed=0) -> TrainState:
    """Factorized start centered on the population coefficients.

    Every sample's coefficient column starts at the population vector plus a
    small Gaussian perturbation (scale ``init_noise``); the perturbation is
    centered across samples and projected off the population direction so
    the initial center of mass is the population vector to machine
    precision.  The truncated SVD then gives the best rank-q factorization
    of that matrix.  Metric weights start at one.
    """
    p, n = dataset.p, dataset.n
    q = hyper.latent_dim
    if q > min(p, n):
        raise ValueError(f"latent_dim {q} exceeds min(p={p}, n={n})")
    pop = np.asarray(population_coef, dtype=float)
    if pop.shape != (p,):
        raise ValueError(f"population coefficients must have shape ({p},)")

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((p, n))
    norm = float(np.linalg.norm(pop))
    if norm > 0.0:
        unit = pop / norm
        noise -= np.outer(unit, unit @ noise)
    noise -= noise.mean(axis=1, keepdims=True)

    base = pop[:, None] + hyper.init_noise * noise
    left, spectrum, right_t = np.linalg.svd(base, full_matrices=False)
    fact = Factorization(
        loadings=spectrum[:q, None] * right_t[:q],
        dictionary=left[:, :q].T,
    )
    return TrainState(
        factorization=fact,
        weights=np.ones(dataset.k, dtype=float),
        population_coef=pop,
        iteration=0,
        last_value=None,
    )


def _weight_rate_limit(alpha: float, cache: DistanceCache, i_idx, j_idx, hyper) -> float:
    """Stable scalar rate for the weight block.

    The distance-matching penalty is quadratic in the weights with Hessian
    trace  strength * sum over pairs of squared covariate distances, plus
    2 * anchor per covariate.  A gradient step is safe below the reciprocal
    of that trace, and the configured rate is used whenever it already is.
    """
    total = 0.0
    if hyper.distance_match > 0.0 and len(i_idx):
        for idx in range(cache.width):
            d = cache.distances[idx][i_idx, j_idx]
            total += float(np.sum(d * d))
        total *= hyper.distance_match
    total += 2.0 * hyper.weights_anchor * cache.width
    if total <= 0.0:
        return alpha
    return min(alpha, 1.0 / total)


def train_step(
    state: TrainState, dataset: Dataset, cache: DistanceCache, hyper: HyperParams
) -> TrainState:
    """One descent iteration.

    All gradients are evaluated at the snapshot taken on entry; the weight,
    loading, and dictionary blocks then move simultaneously.  Loading column
    i is scaled by the global rate divided by the (floored) infinity-norm
    distance of its coefficients from the population anchor.  The weight
    projection keeps the metric nonnegative.
    """
    fact, weights = state.factorization, state.weights
    alpha = learning_rate(hyper, state.iteration)

    use_match = hyper.distance_match > 0.0 and dataset.n >= 2
    if use_match:
        radius = resolve_radius(fact.loadings, hyper)
        sets = neighbor_sets(fact.loadings, radius)
    else:
        radius = None
        sets = [np.empty(0, dtype=np.int64) for _ in range(dataset.n)]
    i_idx, j_idx = neighbor_pairs(sets)

    bundle = composite_objective(fact, weights, dataset, cache, hyper, sets=sets)

    rate_w = _weight_rate_limit(alpha, cache, i_idx, j_idx, hyper)
    new_weights = np.maximum(0.0, weights - rate_w * bundle.grad_weights)

    coefficients = coefficient_matrix(fact)
    anchor_dist = np.max(np.abs(coefficients - state.population_coef[:, None]), axis=0)
    rates = alpha / np.maximum(hyper.rate_floor, anchor_dist)
    step_loadings = rates[None, :] * bundle.grad_loadings
    if use_match:
        # back the whole block off so no loading moves past the
        # neighbor-ball radius; one shared scalar keeps the scaling uniform
        norms = np.sqrt(np.sum(step_loadings * step_loadings, axis=0))
        largest = float(np.max(norms))
        cap = np.sqrt(radius)
        if largest > cap:
            step_loadings *= cap / largest

    new_loadings = fact.loadings - step_loadings
    new_dictionary = fact.dictionary - alpha * bundle.grad_dictionary
    if not (
        np.all(np.isfinite(new_loadings))
        and np.all(np.isfinite(new_dictionary))
        and np.all(np.isfinite(new_weights))
    ):
        raise NumericalError(
            f"non-finite update at iteration {state.iteration}",
            iteration=state.iteration,
        )

    return TrainState(
        factorization=Factorization(loadings=new_loadings, dictionary=new_dictionary),
        weights=new_weights,
        population_coef=state.population_coef,
        iteration=state.iteration + 1,
        last_value=bundle.value,
        converged=False,
        mean_neighbors=len(i_idx) / dataset.n,
        radius_used=radius,
    )


def _drift_bound(hyper: HyperParams, tau: int) -> float:
    c = hyper.lr_decay
    return hyper.lr_init * (hyper.l1 + 1.0) * (1.0 - c**tau) / (1.0 - c)


def fit(
    dataset: Dataset,
    hyper: HyperParams | None = None,
    seed=0,
    *,
    population_cfg: ElasticNetConfig | None = None,
    instrument: bool = False,
    trace_fn=None,
) -> TrainedModel:
    """Full training run, returning the assembled model.

    Runs the population fit, the factorized initialization, then descent
    steps until the composite objective stalls (relative change below
    ``rel_tol``) or ``max_iters`` is reached.  Deterministic for a fixed
    seed and configuration.

    ``trace_fn``, when given, receives one record per iteration with the
    rate, objective, center-of-mass movement, and neighbor statistics.
    With ``instrument`` set and a regression task, records also carry the
    theoretical per-step and accumulated center-of-mass bounds.
    """
    if hyper is None:
        hyper = HyperParams()
    if population_cfg is None:
        population_cfg = ElasticNetConfig(
            l1=hyper.l1, l2=1e-4 * hyper.l1, fit_task=dataset.task
        )
    pop = fit_population(dataset, population_cfg)
    cache = precompute_cache(dataset.covariates)
    state = initialize(dataset, hyper, pop, seed)

    tracing = trace_fn is not None
    com = center_of_mass(state.factorization) if tracing else None
    for _ in range(hyper.max_iters):
        prev_value = state.last_value
        alpha = learning_rate(hyper, state.iteration)
        step_index = state.iteration
        state = train_step(state, dataset, cache, hyper)
        if tracing:
            new_com = center_of_mass(state.factorization)
            record = {
                "t": step_index,
                "alpha": alpha,
                "objective": state.last_value,
                "com_step": float(np.max(np.abs(new_com - com))),
                "com_drift": float(np.max(np.abs(new_com - pop))),
                "mean_neighbors": state.mean_neighbors,
                "radius": state.radius_used,
            }
            if instrument and dataset.task == REGRESSION:
                record["step_bound"] = alpha * (hyper.l1 + 1.0)
                record["drift_bound"] = _drift_bound(hyper, step_index + 1)
            trace_fn(record)
            com = new_com
        if prev_value is not None and abs(state.last_value - prev_value) <= (
            hyper.rel_tol * max(1.0, abs(prev_value))
        ):
            state = replace(state, converged=True)
            break

    return TrainedModel(
        factorization=state.factorization,
        weights=state.weights,
        population_coef=pop,
        train_covariates=dataset.covariates,
        task=dataset.task,
        hyper=hyper,
    )
