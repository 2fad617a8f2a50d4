"""Linear solvers and time integration."""
from .multigrid import (LinearSolve, MeshHierarchy, MultigridHierarchy, SolverConfig,
                        average_contraction, mg_cycle, prolongation, solve_linear)
from .smoothers import GaussSeidelSmoother, ILU0, ILUSmoother, gauss_seidel_sweep, ilu0_factor
from .stepping import StepResult, TimeController, advance, implicit_euler_step

__all__ = [
    "GaussSeidelSmoother", "ILU0", "ILUSmoother", "LinearSolve", "MeshHierarchy",
    "MultigridHierarchy", "SolverConfig", "StepResult", "TimeController", "advance",
    "average_contraction", "gauss_seidel_sweep", "ilu0_factor", "implicit_euler_step",
    "mg_cycle", "prolongation", "solve_linear",
]
