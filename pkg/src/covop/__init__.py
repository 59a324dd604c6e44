"""Permutation tests for equality of covariance operators across groups of curves."""

__version__ = "0.1.0"

from .covmetrics import (  # noqa: E402
    center_groups,
    dist_hs,
    dist_procrustes,
    dist_sqrt,
    estimate_covariance,
    matrix_sqrt,
    procrustes_aligner,
)
from .data import CurveGroup, FunctionalDataset, Grid  # noqa: E402
from .estimator import CovarianceEqualityTest  # noqa: E402
from .permengine import PermutationPlan, TestResult, global_test  # noqa: E402

__all__ = [
    "CovarianceEqualityTest",
    "CurveGroup",
    "FunctionalDataset",
    "Grid",
    "PermutationPlan",
    "TestResult",
    "center_groups",
    "dist_hs",
    "dist_procrustes",
    "dist_sqrt",
    "estimate_covariance",
    "global_test",
    "matrix_sqrt",
    "procrustes_aligner",
]
