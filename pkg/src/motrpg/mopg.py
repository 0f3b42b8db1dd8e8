"""Proximal gradient baseline.

The model curvature is a scalar ``ell`` times identity for every objective
and the trust region is replaced by a radius large enough never to bind.
``ell`` backtracks geometrically until the sufficient-decrease test
``max_j (F_j(x + d) - F_j(x)) <= t / 2`` holds, and is carried over to the
next iteration.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .problem import Evaluator, MOProblem
from .subproblem import B_CAP, DEFAULT_TOL, SIGMA_FLOOR, QuadModelSet, solve_subproblem
from .trust_region import (
    IterateRecord,
    SolverRun,
    certificate_tolerance,
    criticality_certificate,
)


@dataclass
class MOPGConfig:
    ell0: float = 1.0
    growth: float = 2.0
    eps: float = 1e-5
    max_iters: int = 2000
    max_backtracks: int = 60
    subproblem_tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not self.ell0 > 0:
            raise ValueError("ell0 must be positive")
        if not self.growth > 1:
            raise ValueError("growth must exceed 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_iters < 0 or self.max_backtracks < 0:
            raise ValueError("iteration budgets must be nonnegative")

    def to_dict(self):
        return asdict(self)


def inactive_radius(grads, ell):
    """A radius the proximal step can never reach."""
    gmax = max(float(np.linalg.norm(g)) for g in grads)
    return 1e6 * (1.0 + gmax / ell)


def solve_mopg(problem: MOProblem, x0, config: Optional[MOPGConfig] = None) -> SolverRun:
    config = config or MOPGConfig()
    x = np.asarray(x0, dtype=float).copy()
    if x.size != problem.n or not np.all(np.isfinite(x)):
        raise ValueError("x0 must be a finite vector of the problem dimension")
    ev = Evaluator(problem)
    run = SolverRun("MOPG", problem.name, x.copy(), counters=ev.counters,
                    config=config.to_dict())
    F = ev.F(x)
    G = ev.grads(x)
    ell = config.ell0
    k = 0
    last_norm = 0.0
    done = False
    while not done:
        if k >= config.max_iters:
            run.termination = "max_iters"
            break
        backtracks = 0
        while True:
            models = QuadModelSet([ell * np.eye(problem.n)] * problem.m,
                                  min(SIGMA_FLOOR, ell), max(B_CAP, ell))
            delta = inactive_radius(G, ell)
            sol = solve_subproblem(x, problem, models, delta, config.subproblem_tol, grads=G)
            d = sol.d
            last_norm = float(np.linalg.norm(d))
            if last_norm < config.eps:
                run.trajectory.append(IterateRecord(
                    k, x.copy(), F.copy(), delta, d, sol.t, float("nan"), backtracks, False,
                    sol.mu, sol.lam))
                run.termination = "converged"
                done = True
                break
            F_new = ev.F(x + d)
            ok = sol.t < 0 and float(np.max(F_new - F)) <= sol.t / 2
            r = float(np.min(F - F_new) / -sol.t) if sol.t < 0 else -np.inf
            run.trajectory.append(IterateRecord(
                k, x.copy(), F.copy(), delta, d, sol.t, r, backtracks, ok, sol.mu, sol.lam))
            if ok:
                x = x + d
                F = F_new
                G = ev.grads(x)
                k += 1
                break
            ell *= config.growth
            backtracks += 1
            if backtracks > config.max_backtracks:
                run.termination = "inner_loop_exhausted"
                done = True
                break

    run.x, run.F = x, F
    tau = certificate_tolerance(problem, x, G, last_norm, config.eps)
    run.final_certificate = criticality_certificate(problem, x, tau, evaluator=Evaluator(problem))
    return run
