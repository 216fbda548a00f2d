"""Inviscid quasi-geostrophic flow in a stratified cylinder.

The lateral boundary carries an unknown per-level trace c(t, z) and a
prescribed circulation j0(z); the plates carry transported Neumann data.
"""
from .geometry import DomainSpec, GeometryError, build_basis
from .fields import StreamState, ScalarField3D, SurfaceFieldPair, CirculationProfile, circulation_of, norms
from .elliptic import BoundaryTriple, GalerkinSystem, solve_variational, compatibility_defect, weak_circulation
from .solver import RunConfig, QGSolver, PicardError, march

__version__ = "0.1.0"

__all__ = [
    "DomainSpec", "GeometryError", "build_basis", "StreamState", "ScalarField3D", "SurfaceFieldPair",
    "CirculationProfile", "circulation_of", "norms", "BoundaryTriple", "GalerkinSystem", "solve_variational",
    "compatibility_defect", "weak_circulation", "RunConfig", "QGSolver", "PicardError", "march",
]
