"""Trust-region proximal gradient method for composite multi-objective problems.

Each outer iteration solves the max-of-models subproblem on a ball, accepts
the step when the worst-case actual reduction is a fixed fraction of the
predicted one, and otherwise shrinks the radius and re-solves from the same
point. Curvature models are updated per objective with Powell-damped BFGS.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .hull import min_norm_point
from .problem import EvalCounters, Evaluator, MOProblem, default_activity_tol
from .subproblem import B_CAP, DEFAULT_TOL, SIGMA_FLOOR, QuadModelSet, clamp_spd, solve_subproblem

SCHEMA_VERSION = 1


@dataclass
class SolverConfig:
    """Parameters of the trust-region method.

    ``radius_rule`` picks the initial radius from the smallest smooth
    gradient norm at the start point: ``"sqrt"`` takes its square root,
    which keeps first steps moderate when gradients are large, and
    ``"linear"`` takes the norm itself. ``delta0``/``delta_min`` override
    the rule when given.
    """

    sigma0: float = 0.01
    sigma1: float = 1.5
    sigma2: float = 0.5
    sigma3: float = 0.5
    delta0: Optional[float] = None
    delta_min: Optional[float] = None
    radius_rule: str = "sqrt"
    eps: float = 1e-5
    max_outer_iters: int = 2000
    max_inner_shrinks: int = 60
    sigma_floor: float = SIGMA_FLOOR
    b_cap: float = B_CAP
    initial_B: float = 1.0  # B_j(x0) = initial_B * I
    subproblem_tol: float = DEFAULT_TOL

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0 < self.sigma3 < 1 < self.sigma1:
            raise ValueError("need 0 < sigma3 < 1 < sigma1")
        if not 0 < self.sigma0 < self.sigma2 < 1:
            raise ValueError("need 0 < sigma0 < sigma2 < 1")
        if self.delta_min is not None and not self.delta_min > 0:
            raise ValueError("delta_min must be positive")
        if self.delta0 is not None and not self.delta0 > 0:
            raise ValueError("delta0 must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.radius_rule not in ("sqrt", "linear"):
            raise ValueError(f"unknown radius rule {self.radius_rule!r}")
        if not 0 < self.sigma_floor <= self.initial_B <= self.b_cap:
            raise ValueError("initial_B must lie in [sigma_floor, b_cap]")
        if self.max_outer_iters < 0 or self.max_inner_shrinks < 0:
            raise ValueError("iteration budgets must be nonnegative")

    def initial_radii(self, grad_norm_min):
        rule = math.sqrt if self.radius_rule == "sqrt" else (lambda v: v)
        dmin = self.delta_min if self.delta_min is not None else rule(max(grad_norm_min, 1.0))
        d0 = self.delta0 if self.delta0 is not None else max(rule(grad_norm_min), dmin)
        return d0, dmin

    def to_dict(self):
        return asdict(self)


@dataclass
class IterateRecord:
    k: int
    x: np.ndarray
    F: np.ndarray
    delta_used: float
    d: np.ndarray
    t: float
    rho: float
    inner_shrinks: int
    accepted: bool
    mu: float = 0.0
    lam: Optional[np.ndarray] = None

    def to_dict(self):
        return {
            "k": self.k, "x": self.x.tolist(), "F": self.F.tolist(),
            "delta": self.delta_used, "d": self.d.tolist(), "t": self.t,
            "rho": None if not np.isfinite(self.rho) else self.rho,
            "inner_shrinks": self.inner_shrinks, "accepted": self.accepted,
            "mu": self.mu, "lam": None if self.lam is None else self.lam.tolist(),
        }


@dataclass
class CriticalityCertificate:
    """Distance from the origin to the hull of composite subgradients."""

    hull_distance: float
    weights: np.ndarray
    generators: np.ndarray
    owner: np.ndarray  # objective index of each generator
    tau_act: float = 0.0

    def to_dict(self):
        return {"hull_distance": self.hull_distance, "weights": self.weights.tolist(),
                "generators": self.generators.tolist(), "owner": self.owner.tolist(),
                "tau_act": self.tau_act}


@dataclass
class SolverRun:
    solver: str
    problem: str
    x0: np.ndarray
    trajectory: list = field(default_factory=list)
    termination: str = "running"
    counters: EvalCounters = field(default_factory=EvalCounters)
    x: Optional[np.ndarray] = None
    F: Optional[np.ndarray] = None
    final_certificate: Optional[CriticalityCertificate] = None
    config: dict = field(default_factory=dict)
    message: str = ""

    @property
    def accepted(self):
        return [r for r in self.trajectory if r.accepted]

    @property
    def outer_iterations(self):
        return len(self.accepted)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "solver": self.solver,
            "problem": self.problem,
            "config": self.config,
            "x0": self.x0.tolist(),
            "x": None if self.x is None else self.x.tolist(),
            "F": None if self.F is None else self.F.tolist(),
            "termination": self.termination,
            "message": self.message,
            "counters": self.counters.as_dict(),
            "certificate": (None if self.final_certificate is None
                            else self.final_certificate.to_dict()),
            "trajectory": [r.to_dict() for r in self.trajectory],
        }

    def to_csv(self):
        buf = io.StringIO()
        m = len(self.F) if self.F is not None else 0
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k"] + [f"F{j + 1}" for j in range(m)]
                        + ["delta", "norm_d", "rho", "accepted"])
        for r in self.trajectory:
            writer.writerow([r.k] + [repr(float(v)) for v in r.F]
                            + [repr(r.delta_used), repr(float(np.linalg.norm(r.d))),
                               repr(float(r.rho)), int(r.accepted)])
        return buf.getvalue()


# --------------------------------------------------------------------------
# building blocks


def rho(F_before, F_after, t) -> float:
    """Worst-case actual reduction over predicted reduction ``-t``."""
    if not t < 0:
        raise ValueError(f"predicted reduction must be positive, got t={t}")
    drop = np.asarray(F_before, dtype=float) - np.asarray(F_after, dtype=float)
    return float(drop.min() / -t)


def update_radius(delta, rho_value, config: SolverConfig):
    """Return ``(next_delta, action)`` with action shrink, keep or expand."""
    if not delta > 0:
        raise ValueError("radius must be positive")
    if rho_value < config.sigma0:
        return config.sigma3 * delta, "shrink"
    if rho_value < config.sigma2:
        return delta, "keep"
    dmin = config.delta_min if config.delta_min is not None else 0.0
    return max(config.sigma1 * delta, dmin), "expand"


def damped_bfgs_update(B, s, y, sigma_floor=SIGMA_FLOOR, b_cap=B_CAP):
    """Powell-damped BFGS update followed by eigenvalue clamping."""
    B = np.asarray(B, dtype=float)
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.any(s):
        raise ValueError("step s must be nonzero")
    Bs = B @ s
    c = float(s @ Bs)
    sy = float(s @ y)
    if sy < 0.2 * c:
        theta = 0.8 * c / (c - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)
    B_new = B - np.outer(Bs, Bs) / c + np.outer(y, y) / sy
    return clamp_spd(B_new, sigma_floor, b_cap)


def criticality_certificate(problem: MOProblem, x, tau_act=None, tol=1e-12,
                            evaluator: Optional[Evaluator] = None) -> CriticalityCertificate:
    """Distance from zero to the convex hull of all ``grad f_j + xi_j``.

    ``tau_act`` is the activity tolerance for nonsmooth pieces; by default
    the scale-free ``1e-8 * (1 + |g_j(x)|)`` per objective.
    """
    ev = evaluator if evaluator is not None else Evaluator(problem)
    x = np.asarray(x, dtype=float)
    gens, owner = [], []
    used_tau = 0.0
    for j in range(problem.m):
        gj = ev.grad(x, j)
        tau = tau_act
        if tau is None:
            tau = default_activity_tol(problem.objectives[j].nonsmooth.value(x))
        used_tau = max(used_tau, tau)
        act = ev.g_active_subgradients(x, j, tau)
        for xi in act.generators:
            gens.append(gj + xi)
            owner.append(j)
    G = np.array(gens)
    point, weights = min_norm_point(G, tol=tol)
    return CriticalityCertificate(float(np.linalg.norm(point)), weights, G,
                                  np.array(owner), used_tau)


def certificate_tolerance(problem: MOProblem, x, grads, step_norm, eps):
    """Activity tolerance for certifying an approximate critical point.

    Pieces within ``10 * max(|d|, eps)`` times the local gradient scale of
    the maximum are treated as active.
    """
    scale = 1.0 + max(float(np.linalg.norm(g)) for g in grads)
    for obj in problem.objectives:
        pieces = getattr(obj.nonsmooth, "pieces", ())
        for p in pieces:
            scale = max(scale, 1.0 + float(np.linalg.norm(p.gradient(x))))
        nu = getattr(obj.nonsmooth, "nu", 0.0)
        scale = max(scale, 1.0 + nu)
    return 10.0 * max(step_norm, eps) * scale


# --------------------------------------------------------------------------
# driver


def solve(problem: MOProblem, x0, config: Optional[SolverConfig] = None) -> SolverRun:
    """Run the trust-region proximal gradient method from ``x0``."""
    config = config or SolverConfig()
    x = np.asarray(x0, dtype=float).copy()
    if x.size != problem.n or not np.all(np.isfinite(x)):
        raise ValueError("x0 must be a finite vector of the problem dimension")
    ev = Evaluator(problem)
    run = SolverRun("MOTRPG", problem.name, x.copy(), counters=ev.counters)

    F = ev.F(x)
    G = ev.grads(x)
    gmin = min(float(np.linalg.norm(g)) for g in G)
    delta, dmin = config.initial_radii(gmin)
    # materialize the resolved radii in the recorded configuration
    resolved = SolverConfig(**{**config.to_dict(), "delta0": delta, "delta_min": dmin})
    run.config = resolved.to_dict()

    Bs = [config.initial_B * np.eye(problem.n) for _ in range(problem.m)]
    k = 0
    last_norm = 0.0
    while True:
        if k >= config.max_outer_iters:
            run.termination = "max_iters"
            break
        shrinks = 0
        models = QuadModelSet(Bs, config.sigma_floor, config.b_cap)
        done = False
        while True:
            sol = solve_subproblem(x, problem, models, delta, config.subproblem_tol, grads=G)
            d = sol.d
            last_norm = float(np.linalg.norm(d))
            if last_norm < config.eps:
                run.trajectory.append(IterateRecord(
                    k, x.copy(), F.copy(), delta, d, sol.t, float("nan"), shrinks, False,
                    sol.mu, sol.lam))
                run.termination = "converged"
                done = True
                break
            F_new = ev.F(x + d)
            r = rho(F, F_new, sol.t) if sol.t < 0 else -math.inf
            next_delta, action = update_radius(delta, r, resolved)
            run.trajectory.append(IterateRecord(
                k, x.copy(), F.copy(), delta, d, sol.t, r, shrinks, action != "shrink",
                sol.mu, sol.lam))
            if action == "shrink":
                shrinks += 1
                delta = next_delta
                if shrinks > config.max_inner_shrinks:
                    run.termination = "inner_loop_exhausted"
                    done = True
                    break
                continue
            x_new = x + d
            G_new = ev.grads(x_new)
            Bs = [damped_bfgs_update(Bs[j], d, G_new[j] - G[j], config.sigma_floor,
                                     config.b_cap) for j in range(problem.m)]
            x, F, G = x_new, F_new, G_new
            delta = next_delta
            k += 1
            break
        if done:
            break

    run.x, run.F = x, F
    tau = certificate_tolerance(problem, x, G, last_norm, config.eps)
    run.final_certificate = criticality_certificate(problem, x, tau, evaluator=Evaluator(problem))
    return run
