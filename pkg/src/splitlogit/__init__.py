"""Split logistic regression: ensembles of sparse, diverse logistic models."""

from .core import (
    Dataset,
    HyperParams,
    ImportanceSets,
    SplitFit,
    diversity_penalty,
    ensemble_predict,
    ensemble_predict_proba,
    importance_sets,
    logistic_loss,
    model_probabilities,
    objective,
    sigmoid,
    sparsity_penalty,
)
from .solver import ConvergenceWarning, fit, kkt_residuals, solution_path
from .tuning import alternating_search, cv_loss, lambda_d_max, lambda_s_max, make_grid

__version__ = "0.1.0"
