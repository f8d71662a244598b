"""C1 virtual elements of arbitrary order k >= 2 for the buckling of Kirchhoff plates."""

from .analysis import PRESETS, StudyConfig, eta_field, export_mode, fit_convergence, nondimensionalize, run_study
from .assembly import BoundarySpec, GlobalSystem, assemble, build_dof_map, constrain
from .eigensolver import EigenResult, SolverConfig, dense_reference, solve_buckling
from .element import LocalElement, build_dof_layout, local_matrices
from .mesh import PolygonalMesh, check_mesh_assumptions, generate_mesh, read_mesh, write_mesh

__all__ = [
    "PRESETS",
    "BoundarySpec",
    "EigenResult",
    "GlobalSystem",
    "LocalElement",
    "PolygonalMesh",
    "SolverConfig",
    "StudyConfig",
    "assemble",
    "build_dof_layout",
    "build_dof_map",
    "check_mesh_assumptions",
    "constrain",
    "dense_reference",
    "eta_field",
    "export_mode",
    "fit_convergence",
    "generate_mesh",
    "local_matrices",
    "nondimensionalize",
    "read_mesh",
    "run_study",
    "solve_buckling",
    "write_mesh",
]
