"""Numerical laboratory for quantitative isoperimetric stability on
piecewise-linear curves and surfaces."""

from .curvature import CurvatureField, curvature_field, outside_annulus_curvature_integral, z_field
from .distances import (
    best_circle_hausdorff,
    hausdorff_to_model,
    lipschitz_distance_to_sphere,
    point_in_solid,
    preiss_distance,
)
from .experiments import ExponentTable, fit_exponent, registered_checks, run_sweep
from .io import read_mesh, write_mesh
from .measures import annulus_concentration, fit_sphere, fraenkel_asymmetry
from .mesh import AnnulusSpec, BoundaryMesh, isoperimetric_summary, validate
from .spectral import chavel_deficit, laplace_spectrum

__all__ = [
    "AnnulusSpec",
    "BoundaryMesh",
    "CurvatureField",
    "ExponentTable",
    "annulus_concentration",
    "best_circle_hausdorff",
    "chavel_deficit",
    "curvature_field",
    "fit_exponent",
    "fit_sphere",
    "fraenkel_asymmetry",
    "hausdorff_to_model",
    "isoperimetric_summary",
    "laplace_spectrum",
    "lipschitz_distance_to_sphere",
    "outside_annulus_curvature_integral",
    "point_in_solid",
    "preiss_distance",
    "read_mesh",
    "registered_checks",
    "run_sweep",
    "validate",
    "write_mesh",
    "z_field",
]
