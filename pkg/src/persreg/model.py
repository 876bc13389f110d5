"""Shared data model: datasets, the factorized per-sample coefficients, and
hyperparameters.

Per-sample coefficient vectors are never stored as a dense p x n matrix on
their own.  They are always derived from a shared dictionary (q x p) and
per-sample loadings (q x n), which keeps the two representations from
drifting apart.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

REGRESSION = "regression"
CLASSIFICATION = "classification"
TASKS = (REGRESSION, CLASSIFICATION)

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
COVARIATE_KINDS = (CONTINUOUS, CATEGORICAL)


def _frozen_float_array(values, name: str, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def validate_task(task: str) -> str:
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}, got {task!r}")
    return task


@dataclass(frozen=True)
class CovariateTable:
    """Column-typed covariate table.

    Continuous columns are float arrays; categorical columns keep their labels
    as strings.  ``kinds`` is the per-column metric schema.
    """

    columns: tuple
    kinds: tuple
    names: tuple

    def __post_init__(self):
        if len(self.columns) == 0:
            raise ValueError("covariate table needs at least one column")
        if not (len(self.columns) == len(self.kinds) == len(self.names)):
            raise ValueError("columns, kinds and names must align")
        n = len(self.columns[0])
        frozen = []
        for idx, (col, kind) in enumerate(zip(self.columns, self.kinds)):
            if kind not in COVARIATE_KINDS:
                raise ValueError(f"column {idx}: unknown kind {kind!r}")
            if kind == CONTINUOUS:
                arr = np.array(col, dtype=float)
                if not np.all(np.isfinite(arr)):
                    bad = int(np.flatnonzero(~np.isfinite(arr))[0])
                    raise ValueError(
                        f"covariate column {idx} has a non-finite value at row {bad}"
                    )
            else:
                arr = np.array([str(v) for v in col], dtype=object)
            if arr.shape != (n,):
                raise ValueError(f"column {idx} has length {arr.shape}, expected {n}")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "columns", tuple(frozen))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "names", tuple(str(s) for s in self.names))

    @classmethod
    def from_columns(cls, columns: Sequence, kinds: Sequence[str], names=None):
        if names is None:
            names = [f"u{i}" for i in range(len(columns))]
        return cls(columns=tuple(columns), kinds=tuple(kinds), names=tuple(names))

    @classmethod
    def continuous(cls, matrix, names=None) -> "CovariateTable":
        """Build an all-continuous table from an (n, k) array."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ValueError("expected a 2-d array of covariates")
        cols = tuple(matrix[:, j] for j in range(matrix.shape[1]))
        return cls.from_columns(cols, (CONTINUOUS,) * matrix.shape[1], names)

    def __len__(self) -> int:
        return len(self.columns[0])

    @property
    def width(self) -> int:
        return len(self.columns)

    def row(self, i: int) -> tuple:
        return tuple(col[i] for col in self.columns)

    def take(self, rows) -> "CovariateTable":
        rows = np.asarray(rows, dtype=int)
        return CovariateTable(
            columns=tuple(col[rows] for col in self.columns),
            kinds=self.kinds,
            names=self.names,
        )

    def validate_row(self, row) -> tuple:
        """Coerce one covariate row to this table's schema."""
        row = tuple(row)
        if len(row) != self.width:
            raise ValueError(
                f"covariate row has {len(row)} entries, schema expects {self.width}"
            )
        out = []
        for idx, (value, kind) in enumerate(zip(row, self.kinds)):
            if kind == CONTINUOUS:
                value = float(value)
                if not np.isfinite(value):
                    raise ValueError(f"covariate {idx} is non-finite")
            else:
                value = str(value)
            out.append(value)
        return tuple(out)


@dataclass(frozen=True)
class Dataset:
    """Training data: predictors (n x p), responses (n,), covariates (n x k)."""

    predictors: np.ndarray
    responses: np.ndarray
    covariates: CovariateTable
    task: str = REGRESSION

    def __post_init__(self):
        X = _frozen_float_array(self.predictors, "predictors", 2)
        y = _frozen_float_array(self.responses, "responses", 1)
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("need at least one sample and one predictor")
        if not np.all(np.isfinite(X)):
            raise ValueError("predictors contain non-finite values")
        if not np.all(np.isfinite(y)):
            raise ValueError("responses contain non-finite values")
        if y.shape[0] != X.shape[0]:
            raise ValueError(
                f"got {X.shape[0]} predictor rows but {y.shape[0]} responses"
            )
        if len(self.covariates) != X.shape[0]:
            raise ValueError("covariate table length must match sample count")
        validate_task(self.task)
        if self.task == CLASSIFICATION and not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("classification responses must be 0/1")
        object.__setattr__(self, "predictors", X)
        object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return self.predictors.shape[0]

    @property
    def p(self) -> int:
        return self.predictors.shape[1]

    @property
    def k(self) -> int:
        return self.covariates.width

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(
            predictors=self.predictors[rows],
            responses=self.responses[rows],
            covariates=self.covariates.take(rows),
            task=self.task,
        )


@dataclass(frozen=True)
class Factorization:
    """Low-rank representation of all per-sample coefficient vectors.

    ``dictionary`` is q x p and shared across samples; ``loadings`` is q x n
    with one column per sample.  Sample i's coefficients are
    ``dictionary.T @ loadings[:, i]``.
    """

    loadings: np.ndarray
    dictionary: np.ndarray

    def __post_init__(self):
        Z = _frozen_float_array(self.loadings, "loadings", 2)
        Q = _frozen_float_array(self.dictionary, "dictionary", 2)
        if Z.shape[0] != Q.shape[0]:
            raise ValueError(
                f"loadings have latent dim {Z.shape[0]} but dictionary has "
                f"{Q.shape[0]}"
            )
        q = Z.shape[0]
        if not (1 <= q <= min(Q.shape[1], Z.shape[1])):
            raise ValueError(
                f"latent dim {q} must lie in [1, min(p={Q.shape[1]}, n={Z.shape[1]})]"
            )
        if not np.all(np.isfinite(Z)):
            raise ValueError("loadings contain non-finite values")
        if not np.all(np.isfinite(Q)):
            raise ValueError("dictionary contains non-finite values")
        object.__setattr__(self, "loadings", Z)
        object.__setattr__(self, "dictionary", Q)

    @property
    def latent_dim(self) -> int:
        return self.loadings.shape[0]

    @property
    def n_samples(self) -> int:
        return self.loadings.shape[1]

    @property
    def n_predictors(self) -> int:
        return self.dictionary.shape[1]


def coefficient_matrix(fact: Factorization) -> np.ndarray:
    """Materialize the p x n matrix of per-sample coefficient vectors."""
    return fact.dictionary.T @ fact.loadings


def sample_coefficients(fact: Factorization, i: int) -> np.ndarray:
    return fact.dictionary.T @ fact.loadings[:, i]


def normalize_dictionary(fact: Factorization) -> Factorization:
    """Rescale every dictionary column to unit Euclidean norm.

    Loadings are left untouched, so the implied coefficients change; this is
    meant for post-hoc geometry checks, not as a training step.
    """
    norms = np.sqrt(np.sum(fact.dictionary**2, axis=0))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"dictionary column {int(zero[0])} is the zero vector")
    return Factorization(
        loadings=fact.loadings, dictionary=fact.dictionary / norms[None, :]
    )


def center_of_mass(fact: Factorization) -> np.ndarray:
    """Mean coefficient vector over all samples."""
    return fact.dictionary.T @ fact.loadings.mean(axis=1)


@dataclass(frozen=True)
class HyperParams:
    """Training configuration.

    Defaults follow the published simulation setting: l1 strength 0.1,
    distance-matching strength 1e5, weight-anchor strength 1e-2, latent
    dimension 2, initial rate 1e-4 with multiplicative decay 1 - 1e-4, 3
    neighbors at prediction time, and an automatic neighbor-ball radius
    targeting 10 neighbors on average.
    """

    l1: float = 1e-1
    distance_match: float = 1e5
    weights_anchor: float = 1e-2
    latent_dim: int = 2
    radius: float | None = None
    target_neighbors: float | None = 10.0
    lr_init: float = 1e-4
    lr_decay: float = 1.0 - 1e-4
    init_noise: float = 1e-4
    rate_floor: float = 1e-3
    n_neighbors: int = 3
    max_iters: int = 5000
    rel_tol: float = 1e-6

    def __post_init__(self):
        if self.l1 < 0:
            raise ValueError("l1 strength must be >= 0")
        if self.distance_match < 0:
            raise ValueError("distance_match strength must be >= 0")
        if self.weights_anchor < 0:
            raise ValueError("weights_anchor strength must be >= 0")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.radius is None and self.target_neighbors is None:
            raise ValueError("set either radius or target_neighbors")
        if self.radius is not None and self.radius <= 0:
            raise ValueError("radius must be > 0")
        if self.target_neighbors is not None and self.target_neighbors <= 0:
            raise ValueError("target_neighbors must be > 0")
        if self.lr_init <= 0:
            raise ValueError("lr_init must be > 0")
        if not (0.0 < self.lr_decay < 1.0):
            raise ValueError("lr_decay must lie in (0, 1)")
        if self.init_noise <= 0:
            raise ValueError("init_noise must be > 0")
        if self.rate_floor <= 0:
            raise ValueError("rate_floor must be > 0")
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be > 0")

    def with_overrides(self, **kwargs) -> "HyperParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class TrainedModel:
    """Everything needed at prediction time.

    Keeps the factorization, the learned metric weights, the population
    anchor coefficients, and the training covariates for neighbor lookup.
    """

    factorization: Factorization
    weights: np.ndarray
    population_coef: np.ndarray
    train_covariates: CovariateTable
    task: str
    hyper: HyperParams

    def __post_init__(self):
        w = _frozen_float_array(self.weights, "weights", 1)
        pop = _frozen_float_array(self.population_coef, "population_coef", 1)
        if w.shape[0] != self.train_covariates.width:
            raise ValueError("weights length must equal covariate width")
        if np.any(w < 0):
            raise ValueError("metric weights must be nonnegative")
        if self.factorization.n_samples != len(self.train_covariates):
            raise ValueError(
                "factorization column count must match training covariates"
            )
        if pop.shape[0] != self.factorization.n_predictors:
            raise ValueError("population coefficients must have length p")
        validate_task(self.task)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "population_coef", pop)

    @property
    def n_train(self) -> int:
        return self.factorization.n_samples

    @property
    def n_predictors(self) -> int:
        return self.factorization.n_predictors
