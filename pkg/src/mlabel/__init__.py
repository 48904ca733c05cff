"""Convex multiclass image labeling with first-order saddle-point solvers."""

from .grid import Grid, divergence, gradient, laplacian_spectrum, operator_norm_bound
from .potentials import (
    EmbeddingMatrix,
    Envelope,
    Euclidean,
    Metric,
    MetricError,
    RegularizerSpec,
    build_named_potential,
    classical_scaling_embed,
    exact_embedding,
    validate_metric,
)
from .solvers import (
    SaddleProblem,
    SolverConfig,
    SolverReport,
    Termination,
    dual_objective,
    gap,
    primal_objective,
    solve_douglas_rachford,
    solve_douglas_rachford_dual,
    solve_fpd,
    solve_nesterov,
)

__version__ = "0.1.0"

__all__ = [
    "Grid", "divergence", "gradient", "laplacian_spectrum", "operator_norm_bound",
    "EmbeddingMatrix", "Envelope", "Euclidean", "Metric", "MetricError", "RegularizerSpec",
    "build_named_potential", "classical_scaling_embed", "exact_embedding", "validate_metric",
    "SaddleProblem", "SolverConfig", "SolverReport", "Termination", "dual_objective", "gap",
    "primal_objective", "solve_douglas_rachford", "solve_douglas_rachford_dual", "solve_fpd",
    "solve_nesterov",
]
