"""Formal abductive and locally-minimal probabilistic explanations."""

from .counting import CountResult, approx_count, exact_count, precision_from_count
from .encoding import Formula, assume_fixed, encode, pb_to_cnf, to_dimacs, to_opb
from .explain import (
    ApproxCountEstimator,
    ExactEstimator,
    Explanation,
    FfaReport,
    MonteCarloEstimator,
    enumerate_axps,
    extract_axp,
    extract_lmpaxp,
    extract_lmpffaxp,
    ffa,
    ffaxp_set,
    is_paxp_bruteforce,
    is_weak_axp,
    is_weak_paxp,
    min_paxp_bruteforce,
)
from .model import (
    BinarizedNN,
    BnnLayer,
    DecisionTree,
    ExplanationProblem,
    FeatureSpace,
    Instance,
    Leaf,
    RandomForest,
    Split,
    free_space_size,
    make_problem,
    predict,
    validate_problem,
)
from .sampling import hoeffding_sample_size, mc_estimate_precision, sample_free

__version__ = "0.1.0"

__all__ = [
    "ApproxCountEstimator",
    "BinarizedNN",
    "BnnLayer",
    "CountResult",
    "DecisionTree",
    "ExactEstimator",
    "Explanation",
    "ExplanationProblem",
    "FeatureSpace",
    "FfaReport",
    "Formula",
    "Instance",
    "Leaf",
    "MonteCarloEstimator",
    "RandomForest",
    "Split",
    "approx_count",
    "assume_fixed",
    "encode",
    "enumerate_axps",
    "exact_count",
    "extract_axp",
    "extract_lmpaxp",
    "extract_lmpffaxp",
    "ffa",
    "ffaxp_set",
    "free_space_size",
    "hoeffding_sample_size",
    "is_paxp_bruteforce",
    "is_weak_axp",
    "is_weak_paxp",
    "make_problem",
    "mc_estimate_precision",
    "min_paxp_bruteforce",
    "pb_to_cnf",
    "precision_from_count",
    "predict",
    "sample_free",
    "to_dimacs",
    "to_opb",
    "validate_problem",
]
