"""Contextual Bradley-Terry-Luce rankings with prompt covariates, bootstrap
uncertainty, and marginal / simultaneous rank confidence sets."""

__version__ = "0.1.0"

from .errors import RankUQError
from .estimation import FitConfig, FitResult, check_connectivity, check_design_rank, fit, point_ranks
from .model import ComparisonRecord, Dataset, StackedParams, build_constraints, preference_probability, utility
from .ranksets import (
    RankSet,
    extrapolate,
    limiting_difference_cis,
    limiting_rank_sets,
    limiting_ranks,
    marginal_rank_set,
    marginal_rank_sets,
    rank_curve,
    rank_sets,
    simultaneous_rank_sets,
)
from .simlab import CoverageReport, Scenario, generate, run_coverage
from .uncertainty import (
    CovarianceEstimate,
    DifferenceCISet,
    PairSet,
    bootstrap_covariance,
    critical_value,
    difference_cis,
    resolve_pair,
    standard_error,
)

__all__ = [
    "ComparisonRecord",
    "CovarianceEstimate",
    "CoverageReport",
    "Dataset",
    "DifferenceCISet",
    "FitConfig",
    "FitResult",
    "PairSet",
    "RankSet",
    "RankUQError",
    "Scenario",
    "StackedParams",
    "bootstrap_covariance",
    "build_constraints",
    "check_connectivity",
    "check_design_rank",
    "critical_value",
    "difference_cis",
    "extrapolate",
    "fit",
    "generate",
    "limiting_difference_cis",
    "limiting_rank_sets",
    "limiting_ranks",
    "marginal_rank_set",
    "marginal_rank_sets",
    "point_ranks",
    "preference_probability",
    "rank_curve",
    "rank_sets",
    "resolve_pair",
    "run_coverage",
    "simultaneous_rank_sets",
    "standard_error",
    "utility",
]
