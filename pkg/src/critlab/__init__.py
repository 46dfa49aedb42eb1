"""Numerics for the critical Sobolev exponent on model manifolds.

Radial spheres and flat tori are discretized by finite volumes; on them the
package minimizes the Sobolev quotient, classifies potentials h as
subcritical or weakly critical for f, measures concentration of blowing-up
families, computes Green masses on S^3 and checks conformal covariance.
"""

from .errors import (
    CritlabError,
    InvalidConfiguration,
    InvalidInput,
    ManifoldMismatch,
    NoCrossing,
    NotAdmissible,
    NumericFailure,
    PreconditionFailure,
    ResolutionError,
    ResourceLimit,
    UnsupportedDimension,
)
from .functional import ProblemSpec, coercivity_margin, constraint_value, energy_I, quotient_J
from .manifold import DiscreteManifold, build_periodic_torus, build_radial_sphere, make_profile
from .sobolev import SharpConstants, best_sobolev_K2, critical_exponent, sphere_volume, threshold
from .solver import SolveResult, SolverConfig, continuation_in_q, minimize

__version__ = "0.1.0"

__all__ = [
    "CritlabError",
    "InvalidConfiguration",
    "InvalidInput",
    "ManifoldMismatch",
    "NoCrossing",
    "NotAdmissible",
    "NumericFailure",
    "PreconditionFailure",
    "ResolutionError",
    "ResourceLimit",
    "UnsupportedDimension",
    "ProblemSpec",
    "coercivity_margin",
    "constraint_value",
    "energy_I",
    "quotient_J",
    "DiscreteManifold",
    "build_periodic_torus",
    "build_radial_sphere",
    "make_profile",
    "SharpConstants",
    "best_sobolev_K2",
    "critical_exponent",
    "sphere_volume",
    "threshold",
    "SolveResult",
    "SolverConfig",
    "continuation_in_q",
    "minimize",
]
