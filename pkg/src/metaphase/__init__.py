"""Phase design for planar metasurfaces via Monge-Ampere / optimal transport.

The package is organized as

* :mod:`metaphase.optics` -- generalized reflection and refraction laws;
* :mod:`metaphase.scenarios` -- the four source/transport scenarios and
  their reduction to one transport problem;
* :mod:`metaphase.solver` -- entropic transport plus Newton polish, and the
  finite-difference certifier;
* :mod:`metaphase.raytrace` -- ray-traced verification and Jacobian checks;
* :mod:`metaphase.io` -- configuration, grid files and the CLI.
"""

from .errors import (
    DegenerateDensity,
    DomainTouchesEquator,
    EvanescentRay,
    FootprintExceeded,
    FormatError,
    GradientOutOfRange,
    MassImbalance,
    MetaphaseError,
    NoConvergence,
    NotUnit,
    ParseError,
    ValidationError,
)
from .grid import Grid, GridField
from .optics import MediumPair, reflect, refract
from .scenarios import (
    MAProblem,
    Profile,
    Scenario,
    SourceSpec,
    TargetSpec,
    collimated_reflection_T,
    collimated_refraction_T,
    phase_from_potential,
    point_reflection_T,
    point_refraction_T,
    reduce_to_ma,
)
from .solver import SolverParams, SolverResult, convexity_check, ma_residual, solve

__version__ = "0.1.0"

__all__ = [
    "DegenerateDensity", "DomainTouchesEquator", "EvanescentRay", "FootprintExceeded",
    "FormatError", "GradientOutOfRange", "Grid", "GridField", "MAProblem", "MassImbalance",
    "MediumPair", "MetaphaseError", "NoConvergence", "NotUnit", "ParseError", "Profile",
    "Scenario", "SolverParams", "SolverResult", "SourceSpec", "TargetSpec", "ValidationError",
    "collimated_reflection_T", "collimated_refraction_T", "convexity_check", "ma_residual",
    "phase_from_potential", "point_reflection_T", "point_refraction_T", "reduce_to_ma",
    "reflect", "refract", "solve",
]
