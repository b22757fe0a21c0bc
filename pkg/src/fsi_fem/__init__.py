"""Finite elements for a Stokes-wave fluid-structure interaction model.

MINI and P2/P1 flow elements on interface-fitted strip meshes are coupled to
a wave equation through shared interface DOFs and stepped monolithically
with Crank-Nicolson.  The dynamic Ritz projection and manufactured solutions
support convergence studies.
"""

from .analysis import ConvergenceReport, error_norm, fit_rate
from .basis import ElementKind, quadrature
from .cn import CrankNicolson, Operators, run_case
from .dofs import DofLayout, FEField, Space, build_layout, interpolate
from .manufactured import CASES, channel_periodic_case, compatible_case, heat_wave_case, traction_case, verify_sources
from .mesh import GeometrySpec, Mesh, build_structured_mesh, mesh_for_h
from .ritz import RitzSolver, evolve, stationary_solve

__version__ = "0.1.0"

__all__ = [
    "CASES",
    "ConvergenceReport",
    "CrankNicolson",
    "DofLayout",
    "ElementKind",
    "FEField",
    "GeometrySpec",
    "Mesh",
    "Operators",
    "RitzSolver",
    "Space",
    "build_layout",
    "build_structured_mesh",
    "channel_periodic_case",
    "compatible_case",
    "error_norm",
    "evolve",
    "fit_rate",
    "heat_wave_case",
    "interpolate",
    "mesh_for_h",
    "quadrature",
    "run_case",
    "stationary_solve",
    "traction_case",
    "verify_sources",
]
