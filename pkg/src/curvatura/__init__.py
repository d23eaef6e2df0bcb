"""Numerical prescribed-curvature problems for starshaped surfaces in H^3.

Submodules
----------
symfunc      elementary symmetric functions, f = (sigma_k / C(n,k))^(1/k)
sphere_grid  pole-free latitude-longitude grid and difference operators
hypergeom    metric, second fundamental form and curvatures of radial graphs
psi_lang     expression language for the prescribed function psi(u, rho)
solver       Newton / homotopy continuation solver
verify       refinement studies of the geometric identities, property suites
cli          batch front end (``curvatura solve|check|verify``)
"""

from .hypergeom import RadialGraph, curvature_field
from .psi_lang import ProblemSpec, check_hypotheses, parse
from .solver import SolverConfig, continuation_run
from .sphere_grid import SphericalGrid, build_grid

__version__ = "0.1.0"

__all__ = [
    "RadialGraph",
    "curvature_field",
    "ProblemSpec",
    "check_hypotheses",
    "parse",
    "SolverConfig",
    "continuation_run",
    "SphericalGrid",
    "build_grid",
]
