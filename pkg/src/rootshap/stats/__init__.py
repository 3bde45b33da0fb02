from .independence import IndependenceDecision, independence_test, tau_star_p_value
from .pairwise import maxent_entropy, maxent_negentropy, pairwise_measure
from .regression import (
    DegenerateInputError,
    LogisticFit,
    logistic_fit,
    ols_residuals,
    ols_residuals_detail,
    standardize,
)
from .taustar import tau_star, tau_star_brute

__all__ = [
    "DegenerateInputError",
    "IndependenceDecision",
    "LogisticFit",
    "independence_test",
    "logistic_fit",
    "maxent_entropy",
    "maxent_negentropy",
    "ols_residuals",
    "ols_residuals_detail",
    "pairwise_measure",
    "standardize",
    "tau_star",
    "tau_star_brute",
    "tau_star_p_value",
]
