"""Trust-region proximal gradient method for composite multi-objective problems."""

from .problem import (
    Box,
    ClosedForm,
    EvalCounters,
    Evaluator,
    LeastSquares,
    MaxOfQuadratics,
    MOProblem,
    Objective,
    QuadraticPiece,
    SmoothTerm,
    WeightedL1,
    Zero,
    eval_F,
)
from .subproblem import QuadModelSet, SubproblemSolution, grid_oracle, solve_subproblem, theta
from .trust_region import (
    CriticalityCertificate,
    SolverConfig,
    SolverRun,
    criticality_certificate,
    damped_bfgs_update,
    rho,
    solve,
    update_radius,
)
from .mopg import MOPGConfig, solve_mopg

__version__ = "0.1.0"
