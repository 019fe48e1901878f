"""Multigrid-preconditioned interior point and optimality-criteria solvers
for minimum-compliance topology optimization on structured meshes."""
from .fem import Mesh, Problem, ProblemSpec, element_stiffness, preset
from .ipm import IpmConfig, IpmState, ipm_solve
from .krylov import BreakdownError, pcg
from .linear import DirectSolver, MgCgSolver, make_solver
from .multigrid import MultigridHierarchy, vcycle
from .oc import OcConfig, oc_solve
from .runlog import ConvergenceError, RunLog
from .simp import SimpModel, build_filter
from .sparse import NotPositiveDefiniteError, cholesky_factor

__all__ = [
    "Mesh", "Problem", "ProblemSpec", "element_stiffness", "preset",
    "IpmConfig", "IpmState", "ipm_solve",
    "BreakdownError", "pcg",
    "DirectSolver", "MgCgSolver", "make_solver",
    "MultigridHierarchy", "vcycle",
    "OcConfig", "oc_solve",
    "ConvergenceError", "RunLog",
    "SimpModel", "build_filter",
    "NotPositiveDefiniteError", "cholesky_factor",
]
__version__ = "0.1.0"
