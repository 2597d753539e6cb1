"""Kernel- and kNN-based estimation of the functional single-index model."""

from .basis import BasisSpec, Direction, DirectionSetSpec, build_direction_set, eval_basis
from .curves import (
    Curve,
    Grid,
    L2SemiMetric,
    ProjectionSemiMetric,
    derivative_curve,
    inner_product,
    pairwise_distances,
    semi_metric,
)
from .estimators import (
    Bandwidth,
    Kernel,
    Neighbours,
    SmootherConfig,
    TrainingSet,
    knn_bandwidth,
    smooth,
    smooth_loo,
)
from .selection import (
    BoostedFSIM,
    CVResult,
    FittedFNM,
    FittedFSIM,
    HGrid,
    HGridPolicy,
    KGrid,
    boost_residuals,
    cross_validate,
    default_h_grid,
    default_k_grid,
    fit_fnm,
    fit_fsim,
    fsim_predict,
    msep,
)
from .simulation import SimDesign, generate_replicate, run_monte_carlo

__all__ = [
    "BasisSpec",
    "Bandwidth",
    "BoostedFSIM",
    "CVResult",
    "Curve",
    "Direction",
    "DirectionSetSpec",
    "FittedFNM",
    "FittedFSIM",
    "Grid",
    "HGrid",
    "HGridPolicy",
    "KGrid",
    "Kernel",
    "L2SemiMetric",
    "Neighbours",
    "ProjectionSemiMetric",
    "SimDesign",
    "SmootherConfig",
    "TrainingSet",
    "boost_residuals",
    "build_direction_set",
    "cross_validate",
    "default_h_grid",
    "default_k_grid",
    "derivative_curve",
    "eval_basis",
    "fit_fnm",
    "fit_fsim",
    "fsim_predict",
    "generate_replicate",
    "inner_product",
    "knn_bandwidth",
    "msep",
    "pairwise_distances",
    "run_monte_carlo",
    "semi_metric",
    "smooth",
    "smooth_loo",
]
