"""Edge-element curl-curl systems on the unit cube, overlapping Schwarz
preconditioners, GMRES, and convergence diagnostics."""

from .mesh import Mesh, MeshError, build_cube_mesh, nesting_map
from .fem import Coefficients, EdgeSpace, SystemBundle, assemble, build_edge_space
from .decomp import Decomposition, build_decomposition
from .precond import PreconditionerSpec, PreconditionerState, setup
from .krylov import KrylovConfig, KrylovReport, gmres

__all__ = [
    "Mesh",
    "MeshError",
    "build_cube_mesh",
    "nesting_map",
    "Coefficients",
    "EdgeSpace",
    "SystemBundle",
    "assemble",
    "build_edge_space",
    "Decomposition",
    "build_decomposition",
    "PreconditionerSpec",
    "PreconditionerState",
    "setup",
    "KrylovConfig",
    "KrylovReport",
    "gmres",
]
