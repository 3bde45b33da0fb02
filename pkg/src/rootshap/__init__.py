"""Sample-specific root-cause attribution under latent confounding.

Pipeline: generate or load data, standardize, extract inducing terms and
their dependence graph, fit logistic coefficients, attribute per sample by
neighborhood-collapsed Shapley values, score against analytic ground truth.
"""

__version__ = "0.1.0"

from .evalharness import (
    BenchConfig,
    BenchmarkSummary,
    ground_truth_shapley,
    mse,
    rbo,
    run_benchmark,
)
from .extraction import (
    ExtractionResult,
    OracleExtraction,
    apply_partial_log,
    direct_lingam,
    eel,
    eel_oracle,
    extract_errors,
    find_root,
)
from .sem import (
    ErrorDist,
    InducingStructure,
    SemModel,
    StructuralError,
    ThetaMatrix,
    inducing_structure,
    oracle_inducing_terms,
    oracle_target_logit,
    total_effects,
)
from .shapley import (
    KnnCondExp,
    LinearCondExp,
    ShapleyReport,
    attribute,
    neighborhoods,
    psi_weights,
    psi_weights_exact,
    rank_root_causes,
    shapley_bruteforce,
    shapley_exact,
    shapley_monte_carlo,
)
from .stats import (
    IndependenceDecision,
    LogisticFit,
    independence_test,
    logistic_fit,
    ols_residuals,
    pairwise_measure,
    standardize,
    tau_star,
)
from .synth import Dataset, GenConfig, diabetes_fixture, generate_model, sample_dataset
