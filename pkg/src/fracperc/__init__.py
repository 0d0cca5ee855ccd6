"""Fractal percolation in the unit cube: generation, slices, projections, sums, distance sets."""

from .core import (
    BudgetExceeded,
    CubeIndex,
    ExtinctError,
    PercolationParams,
    Realization,
    box_count_slope,
    generate,
    retained_count,
    subtree,
    survival_estimate,
    theoretical_dimension,
)
from .intervals import IntervalUnion

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded",
    "CubeIndex",
    "ExtinctError",
    "IntervalUnion",
    "PercolationParams",
    "Realization",
    "box_count_slope",
    "generate",
    "retained_count",
    "subtree",
    "survival_estimate",
    "theoretical_dimension",
]
