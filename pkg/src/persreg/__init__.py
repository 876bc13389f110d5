"""Per-sample linear and logistic models with a learned covariate metric.

Trains one simple model per training sample through a shared low-rank
factorization, regularized so distances between per-sample loadings track a
learned distance over side covariates; test-time models are assembled by
averaging the nearest training models under that metric.
"""

from .model import (
    CATEGORICAL,
    CLASSIFICATION,
    CONTINUOUS,
    REGRESSION,
    CovariateTable,
    Dataset,
    Factorization,
    HyperParams,
    TrainedModel,
    center_of_mass,
    coefficient_matrix,
    normalize_dictionary,
)
from .metric import (
    DistanceCache,
    auto_radius,
    brute_force_neighbor_sets,
    feature_distance,
    neighbor_pairs,
    neighbor_sets,
    precompute_cache,
    weighted_distance,
)
from .objective import (
    GradientBundle,
    NumericalError,
    composite_objective,
    distance_match_gradients,
    distance_match_values,
    l1_term,
    loss_subgradient,
    predictive_loss,
)
from .optimizer import TrainState, fit, initialize, learning_rate, train_step
from .population import (
    ElasticNetConfig,
    ElasticNetConvergenceError,
    fit_population,
    predict_population,
)
from .predictor import Prediction, predict_batch, predict_point, rank_neighbors
from .simulate import RecoveryMetrics, SyntheticInstance, evaluate_recovery, generate

__version__ = "0.1.0"

__all__ = [
    "CATEGORICAL",
    "CLASSIFICATION",
    "CONTINUOUS",
    "REGRESSION",
    "CovariateTable",
    "Dataset",
    "DistanceCache",
    "ElasticNetConfig",
    "ElasticNetConvergenceError",
    "Factorization",
    "GradientBundle",
    "HyperParams",
    "NumericalError",
    "Prediction",
    "RecoveryMetrics",
    "SyntheticInstance",
    "TrainState",
    "TrainedModel",
    "auto_radius",
    "brute_force_neighbor_sets",
    "center_of_mass",
    "coefficient_matrix",
    "composite_objective",
    "distance_match_gradients",
    "distance_match_values",
    "evaluate_recovery",
    "feature_distance",
    "fit",
    "fit_population",
    "generate",
    "initialize",
    "l1_term",
    "learning_rate",
    "loss_subgradient",
    "neighbor_pairs",
    "neighbor_sets",
    "normalize_dictionary",
    "precompute_cache",
    "predict_batch",
    "predict_point",
    "predict_population",
    "predictive_loss",
    "rank_neighbors",
    "train_step",
    "weighted_distance",
]
