"""Numerical laboratory for mixed Dirichlet-Neumann problems on triangles.

Solves the first mixed eigenpair and semilinear positive solutions on the
triangle family with one vertical Dirichlet side and two Neumann sides
meeting at the origin, and turns the qualitative statements about such
solutions (directional monotonicity, bisector symmetry, maximum-point
location, critical-point uniqueness, reflection positivity on moving
domains) into machine-checkable verdicts.
"""

from .geometry import (classify, condition_13, hat_check_map, is_obtuse,
                       lambda_max, make_triangle, moving_domain, moving_line,
                       narrow_width, reflect_point, thresholds, upsilon)
from .mesh import default_grading, generate, refine, validate
from .fem import (assemble, apply_dirichlet, gradient_field, interpolate,
                  smallest_eigenpair, solve_eigen, solve_semilinear)
from .qualify import build_report, locate_max, resolve_max_class

__version__ = "0.1.0"

__all__ = [
    "classify", "condition_13", "hat_check_map", "is_obtuse", "lambda_max",
    "make_triangle", "moving_domain", "moving_line", "narrow_width",
    "reflect_point", "thresholds", "upsilon",
    "default_grading", "generate", "refine", "validate",
    "assemble", "apply_dirichlet", "gradient_field", "interpolate",
    "smallest_eigenpair", "solve_eigen", "solve_semilinear",
    "build_report", "locate_max", "resolve_max_class",
]
