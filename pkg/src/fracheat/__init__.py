"""Desk-scale numerics for the weighted fractional Laplacian -W(x)(-Delta)^(alpha/2)."""

from .core import (ConfigError, ConstantWeight, FracParams, Grid, GridSpec, Measure, PowerWeight,
                   StretchedExpWeight, TableWeight, WeightSpec, build_grid, build_measure,
                   normalization_constant, riesz_constant, weight_eval)
from .operator import (DiscreteOperator, assemble_form, dirichlet_energy, heat_apply,
                       load_operator, save_operator)

__all__ = [
    "ConfigError", "ConstantWeight", "FracParams", "Grid", "GridSpec", "Measure", "PowerWeight",
    "StretchedExpWeight", "TableWeight", "WeightSpec", "build_grid", "build_measure",
    "normalization_constant", "riesz_constant", "weight_eval",
    "DiscreteOperator", "assemble_form", "dirichlet_energy", "heat_apply",
    "load_operator", "save_operator",
]
