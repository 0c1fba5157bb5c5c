"""Latent curves, energies, geodesics and metric fields."""

from .energy import (
    EnergyReport,
    EnsembleEnergy,
    Evaluator,
    RbfEnergy,
    SingleEnergy,
    curve_length,
    energy_ensemble_decorrelated,
    energy_ensemble_exact,
    energy_rbf,
    energy_single,
    exact_report,
)
from .geodesic import GeodesicOptions, GeodesicResult, minimize_geodesic
from .graph import grid_graph_geodesic
from .metric import (
    expected_metric,
    expected_metrics,
    jacobian,
    magnification,
    pullback_metric,
    reverse_jacobian,
    uncertainty_field,
)
from .spline import SplineCurve, natural_spline_basis, spline_eval, straight_line_curve

__all__ = [
    "EnergyReport",
    "EnsembleEnergy",
    "Evaluator",
    "GeodesicOptions",
    "GeodesicResult",
    "RbfEnergy",
    "SingleEnergy",
    "SplineCurve",
    "curve_length",
    "energy_ensemble_decorrelated",
    "energy_ensemble_exact",
    "energy_rbf",
    "energy_single",
    "exact_report",
    "expected_metric",
    "expected_metrics",
    "grid_graph_geodesic",
    "jacobian",
    "magnification",
    "minimize_geodesic",
    "natural_spline_basis",
    "pullback_metric",
    "reverse_jacobian",
    "spline_eval",
    "straight_line_curve",
    "uncertainty_field",
]
