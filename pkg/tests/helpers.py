"""Small problems shared by several test modules."""

import numpy as np

from motrpg.problem import LeastSquares, MOProblem, Objective, SmoothTerm, WeightedL1, Zero


def half_sq(n=2, nu=0.0):
    """m=1 problem f = 0.5 ||x||^2 (+ nu/2 ||x||_1)."""
    g = WeightedL1(nu) if nu else Zero()
    return MOProblem("half_sq", n, (Objective(SmoothTerm(LeastSquares(np.eye(n), np.zeros(n))), g),))


def shifted_abs():
    """m=1, n=1: f = 0.5 (x - 1)^2 so grad f(1) = 0, g = |x| (nu = 2)."""
    f = SmoothTerm(LeastSquares(np.eye(1), np.ones(1)))
    return MOProblem("shifted_abs", 1, (Objective(f, WeightedL1(2.0)),))
