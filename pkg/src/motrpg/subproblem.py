"""Trust-region subproblem ``min_d max_j Q_j(x, d)  s.t. ||d|| <= delta``.

``Q_j(x, d) = grad f_j(x)'d + 0.5 d'B_j d + g_j(x + d) - g_j(x)``.

The min-max is rewritten in epigraph form, a smooth convex QCQP in
``(d, t, v)``:

* one row per (objective, quadratic piece)::

      a'd + 0.5 d'H d + c + w * sum(v) - t <= 0

  where ``c = piece(x) - g(x) <= 0`` keeps constants small near a solution;
* for weighted-l1 terms the increment is exact and linear,
  ``sign(x_i) d_i``, on coordinates with ``|x_i| >= delta``; the others get
  ``v_i >= |x_i + d_i| - |x_i|`` via two linear rows each, and enter the row
  as ``(nu/2) sum(v)``;
* the ball row ``d'd / delta**2 - 1 <= 0`` (normalized so its slack is O(1)
  at any radius).

It is solved with a dense primal-dual interior-point method, in units of a
radius that provably contains the minimizer. Pieces that cannot attain
their objective's max within that radius are dropped first. Problems here
have at most a few dozen variables and rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .problem import MOProblem, MaxOfQuadratics, WeightedL1, Zero

DEFAULT_TOL = 1e-8
SIGMA_FLOOR = 1e-6
B_CAP = 1e6


class SubproblemError(RuntimeError):
    """The barrier method did not reach the requested tolerance.

    ``best`` holds the last iterate as a :class:`SubproblemSolution`.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


def clamp_spd(B, lo, hi):
    """Symmetrize ``B`` and clip its eigenvalues into ``[lo, hi]``."""
    B = np.asarray(B, dtype=float)
    S = 0.5 * (B + B.T)
    w, V = np.linalg.eigh(S)
    w = np.clip(w, lo, hi)
    C = (V * w) @ V.T
    return 0.5 * (C + C.T)


@dataclass
class QuadModelSet:
    """Per-objective curvature matrices with uniform spectral bounds."""

    B: list
    sigma_floor: float = SIGMA_FLOOR
    b_cap: float = B_CAP

    def __post_init__(self):
        if not 0 < self.sigma_floor <= self.b_cap:
            raise ValueError("need 0 < sigma_floor <= b_cap")
        mats = []
        for B in self.B:
            B = np.asarray(B, dtype=float)
            if not np.all(np.isfinite(B)):
                raise ValueError("non-finite model matrix")
            mats.append(clamp_spd(B, self.sigma_floor, self.b_cap))
        self.B = mats

    @classmethod
    def identity(cls, m, n, scale=1.0, **kw):
        return cls([scale * np.eye(n) for _ in range(m)], **kw)


@dataclass
class SubproblemSolution:
    d: np.ndarray
    t: float
    lam: np.ndarray
    mu: float
    kkt_residual: float
    barrier_iterations: int
    delta: float = float("nan")
    q_values: np.ndarray = field(default=None, repr=False)


# --------------------------------------------------------------------------
# epigraph program


class EpigraphProgram:
    """Row data of the epigraph QCQP at a fixed ``x``.

    ``hessians`` may contain zero matrices (used for the stationarity
    measure, where the model is linear).
    """

    def __init__(self, x, problem: MOProblem, grads, hessians, delta):
        if not delta > 0:
            raise ValueError("trust-region radius must be positive")
        if not 1e-150 <= delta <= 1e150:
            raise ValueError(f"trust-region radius {delta!r} is out of the representable range")
        x = np.asarray(x, dtype=float)
        grads = np.asarray(grads, dtype=float)
        if not (np.all(np.isfinite(grads)) and np.all(np.isfinite(x))):
            raise ValueError("non-finite model data")
        n = problem.n
        self.x = x
        self.n = n
        self.m = problem.m
        self.delta = float(delta)
        self.problem = problem
        self.grads = grads
        self.hessians = [np.asarray(H, dtype=float) for H in hessians]

        # coordinates whose sign is fixed on the ball need no l1 variable
        self.near = np.flatnonzero(np.abs(x) < self.delta)
        far_sign = np.where(np.abs(x) >= self.delta, np.sign(x), 0.0)
        a_rows, h_rows, c_rows, w_rows, owner = [], [], [], [], []
        has_l1 = False
        for j, obj in enumerate(problem.objectives):
            g = obj.nonsmooth
            if isinstance(g, MaxOfQuadratics):
                vals = g.piece_values(x)
                gx = vals.max()
                for p, v in zip(g.pieces, vals):
                    a_rows.append(grads[j] + p.gradient(x))
                    h_rows.append(self.hessians[j] + p.P)
                    c_rows.append(v - gx)
                    w_rows.append(0.0)
                    owner.append(j)
            else:
                w = 0.0
                if isinstance(g, WeightedL1):
                    w = 0.5 * g.nu
                    has_l1 = has_l1 or w > 0
                elif not isinstance(g, Zero):
                    raise TypeError(f"unsupported nonsmooth term {g!r}")
                a_rows.append(grads[j] + w * far_sign)
                h_rows.append(self.hessians[j])
                c_rows.append(0.0)
                w_rows.append(w)
                owner.append(j)

        self.A = np.array(a_rows)
        self.H = np.array(h_rows)
        self.c = np.array(c_rows)
        self.w = np.array(w_rows)
        self.owner = np.array(owner)
        r_free = self._step_bound()
        self._prune_pieces(min(self.delta, r_free))
        self.R = len(self.owner)
        self.nv = len(self.near) if has_l1 else 0
        self.dim = n + 1 + self.nv
        self.K = self.R + 2 * self.nv + 1  # constraint count

        # constant part of the constraint Jacobian: row block and linking block
        J = np.zeros((self.K, self.dim))
        J[: self.R, n] = -1.0
        if self.nv:
            J[: self.R, n + 1:] = self.w[:, None]
            idx, k = self.near, np.arange(self.nv)
            J[self.R + k, idx] = 1.0
            J[self.R + k, n + 1 + k] = -1.0
            J[self.R + self.nv + k, idx] = -1.0
            J[self.R + self.nv + k, n + 1 + k] = -1.0
            xn = x[idx]
            self.link_c = np.concatenate([xn - np.abs(xn), -xn - np.abs(xn)])
        self._J0 = J

        amax = np.abs(self.A).max() if self.A.size else 0.0
        # natural step length; the program is solved in units of it, with
        # d = step * u, t = step * tau and v = step * nu, rows divided by step
        step = max(min(self.delta, r_free), 1e-12 * self.delta)
        self.step = step
        self.H = self.H * step
        self.c = self.c / step
        if self.nv:
            self.link_c = self.link_c / step
        self.ball_scale = (step / self.delta) ** 2
        self.r = 1.0
        self.scale = 1.0 + amax * np.sqrt(n) + self.w.max() * n

    def _step_bound(self):
        """Radius that contains every minimizer with a nonpositive value.

        Each row is bounded below by ``c - b|d| + lam/2 |d|^2`` with ``b``
        covering the linear and l1 parts. An objective is below zero only
        where all of its rows are, so its best row gives a bound, and the
        minimizer obeys the bound of every objective. The rows giving the
        per-objective bounds are recorded in ``anchor``.
        """
        n = self.n
        self.anchor = np.zeros(len(self.c), dtype=bool)
        if not n:
            return self.delta
        bound = np.inf
        for j in range(self.m):
            best, arg = np.inf, -1
            for r in np.flatnonzero(self.owner == j):
                lam = np.linalg.eigvalsh(self.H[r]).min()
                if not lam > 0:
                    continue
                b = np.linalg.norm(self.A[r]) + self.w[r] * np.sqrt(n)
                rad = (b + np.sqrt(b * b + 2.0 * lam * max(-self.c[r], 0.0))) / lam
                if rad < best:
                    best, arg = rad, r
            if arg >= 0:
                self.anchor[arg] = True
            bound = min(bound, best)
        return max(bound, 1e-300)

    def _prune_pieces(self, D):
        """Drop pieces that cannot attain their objective's max on the ball of radius D.

        D is at most the step bound, so every candidate minimizer lies in
        that ball. A piece whose upper bound over it lies below the lower
        bound of a sibling piece never matters there. Anchor rows are kept,
        so outside the ball the pruned model stays positive and the
        minimizer is unchanged. Pruning keeps the remaining rows on the
        scale of the step.
        """
        gnorm = np.linalg.norm(self.A, axis=1)
        top = np.array([np.linalg.eigvalsh(H).max() for H in self.H])
        upper = self.c + gnorm * D + 0.5 * np.maximum(top, 0.0) * D**2
        lower = self.c - gnorm * D
        keep = np.ones(len(self.c), dtype=bool)
        for j in range(self.m):
            rows = np.flatnonzero(self.owner == j)
            floor = lower[rows].max()
            keep[rows] = upper[rows] >= floor - 1e-12 * (1.0 + abs(floor))
        keep |= self.anchor
        self.kept = np.flatnonzero(keep)
        self.A, self.H, self.c = self.A[keep], self.H[keep], self.c[keep]
        self.w, self.owner = self.w[keep], self.owner[keep]

    # -- evaluation -----------------------------------------------------

    def split(self, z):
        n = self.n
        return z[:n], z[n], z[n + 1:]

    def slacks(self, z):
        d, t, v = self.split(z)
        rows = self.A @ d + 0.5 * np.einsum("rij,i,j->r", self.H, d, d) + self.c - t
        if self.nv:
            rows = rows + self.w * v.sum()
            dn = d[self.near]
            link = np.concatenate([dn - v, -dn - v]) + self.link_c
            return -np.concatenate([rows, link, [self.ball_scale * (d @ d) - 1.0]])
        return -np.concatenate([rows, [self.ball_scale * (d @ d) - 1.0]])

    def jacobian(self, z):
        d = z[: self.n]
        J = self._J0.copy()
        J[: self.R, : self.n] = self.A + self.H @ d
        J[-1, : self.n] = 2.0 * self.ball_scale * d
        return J

    def start(self):
        n = self.n
        z = np.zeros(self.dim)
        if self.nv:
            z[n + 1:] = self.r
        d, _, v = self.split(z)
        rows = self.c + self.w * v.sum()
        amax = np.abs(self.A).max() if self.A.size else 0.0
        z[n] = rows.max() + (1.0 + amax) * self.r
        return z

    def start_duals(self, s, balanced=False):
        """Duals satisfying the ``t`` and ``v`` stationarity rows exactly.

        Row duals share the unit mass, linking duals balance the l1 weights
        and the ball dual matches the size of the remaining gradient.
        """
        w = np.empty(self.K)
        w[: self.R] = 1.0 / self.R
        if self.nv:
            w[self.R: self.R + 2 * self.nv] = 0.5 * float(self.w @ w[: self.R])
        pull = np.linalg.norm(self.A.T @ w[: self.R])
        w[-1] = max(pull / (2.0 * self.r * self.ball_scale), 1e-3 / (self.K * s[-1]))
        if balanced:
            # a ball far outside the natural step starts no larger in
            # complementarity than the other constraints
            w[-1] = min(w[-1], float(np.max(w[:-1] * s[:-1])) / s[-1])
        return np.maximum(w, 1e-12)

    def model_values(self, d):
        """``Q_j(x, d)`` for every objective, evaluated stably."""
        out = np.empty(self.m)
        for j, obj in enumerate(self.problem.objectives):
            out[j] = (self.grads[j] @ d + 0.5 * d @ self.hessians[j] @ d
                      + obj.nonsmooth.increment(self.x, d))
        return out

    def to_dict(self):
        """Program data in scaled units (``d = step * u``)."""
        return {
            "x": self.x.tolist(), "delta": self.delta, "step": self.step, "rows": self.R,
            "A": self.A.tolist(), "H": self.H.tolist(), "c": self.c.tolist(),
            "w": self.w.tolist(), "owner": self.owner.tolist(), "nv": self.nv,
        }

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    # -- primal-dual barrier method ---------------------------------------

    def _lagrangian_hessian(self, w):
        return np.einsum("r,rij->ij", w[: self.R], self.H) + 2.0 * self.ball_scale * w[-1] * np.eye(self.n)

    def solve(self, tol=DEFAULT_TOL, max_iter=200):
        """Follow the central path with primal-dual Newton steps.

        The barrier weight is raised tenfold over the current duality
        measure at every iteration. The primal iterate stays strictly
        feasible, so ``s = -c(z) > 0`` throughout.
        """
        converged, state, it = self._path(tol, max_iter, balanced=False)
        if not converged:
            # rare hard instances, retried once from a gentler dual start
            retry = self._path(tol, max_iter, balanced=True)
            before = self._extract(*state, it).kkt_residual
            if retry[0] or self._extract(*retry[1], retry[2]).kkt_residual < before:
                converged, state, it = retry
        sol = self._extract(*state, it)
        if not converged and sol.kkt_residual > tol:
            raise SubproblemError(
                f"interior-point method stopped after {it} iterations, residual "
                f"{sol.kkt_residual:.3e}", best=sol)
        return sol

    def _path(self, tol, max_iter, balanced):
        n, K = self.n, self.K
        z = self.start()
        s = self.slacks(z)
        assert np.all(s > 0), "start point must be strictly feasible"
        w = self.start_duals(s, balanced)
        e_t = np.zeros(self.dim)
        e_t[n] = 1.0

        def residuals(zz, ww, ss, tau):
            J = self.jacobian(zz)
            r_dual = e_t + J.T @ ww
            r_cent = ww * ss - 1.0 / tau
            return J, r_dual, r_cent

        converged = False
        it = 0
        feas_tol = 1e-3 * tol
        while it < max_iter:
            it += 1
            eta = float(s @ w)
            tau = 10.0 * K / eta
            J, r_dual, r_cent = residuals(z, w, s, tau)
            # relative gap near the solution, absolute floor at critical points
            gap_target = min(tol / 10.0, max(1e-10 * abs(z[n]), 1e-14 * self.scale))
            if eta <= gap_target and np.abs(r_dual).max() <= feas_tol:
                converged = True
                break
            M = (J.T * (w / s)) @ J
            M[:n, :n] += self._lagrangian_hessian(w)
            rhs = -r_dual + J.T @ (r_cent / s)
            try:
                dz = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError:
                dz = np.linalg.lstsq(M, rhs, rcond=None)[0]
            dw = (-r_cent + w * (J @ dz)) / s

            neg = dw < 0
            alpha = min(1.0, 0.99 * float(np.min(-w[neg] / dw[neg]))) if neg.any() else 1.0
            r_norm = np.sqrt(r_dual @ r_dual + r_cent @ r_cent)
            while alpha > 1e-14:
                zn = z + alpha * dz
                sn = self.slacks(zn)
                if np.all(sn > 0):
                    wn = w + alpha * dw
                    _, rd, rc = residuals(zn, wn, sn, tau)
                    if np.sqrt(rd @ rd + rc @ rc) <= (1.0 - 0.01 * alpha) * r_norm:
                        break
                alpha *= 0.5
            if alpha <= 1e-14:
                break
            z, w, s = zn, wn, sn
        return converged, (z, w, s), it

    def _extract(self, z, dual, s, iterations):
        n = self.n
        u = z[:n]
        d = self.step * u
        w_rows = dual[: self.R]
        lam_raw = np.bincount(self.owner, weights=w_rows, minlength=self.m)
        total = lam_raw.sum()
        lam = lam_raw / total if total > 0 else np.full(self.m, 1.0 / self.m)
        mu = 2.0 * self.ball_scale * dual[-1] / self.step

        q = self.model_values(d)
        t = float(q.max())

        # all residuals are in scaled units, hence relative to the step length;
        # stationarity in (u, nu), the tau component is the simplex defect
        J = self.jacobian(z)
        stat = J.T @ dual
        stat[n] += 1.0
        res = [
            np.abs(stat[:n]).max() if n else 0.0,
            np.abs(stat[n + 1:]).max() if self.nv else 0.0,
            abs(total - 1.0),
            max(0.0, self.ball_scale * (u @ u) - 1.0),
            float(np.max(lam * (t - q))) / self.step,
            float(np.max(dual * s)),
        ]
        self.last_residuals = res
        if t > 0:
            # an interior iterate near d = 0 can be marginally worse than the
            # trivial step, which is feasible with value zero
            d, t, q = np.zeros(n), 0.0, np.zeros(self.m)
        return SubproblemSolution(
            d=d.copy(), t=t, lam=lam, mu=float(mu), kkt_residual=float(max(res)),
            barrier_iterations=iterations, delta=self.delta, q_values=q)


# --------------------------------------------------------------------------
# public operations


def _gradients(problem, x, grads):
    if grads is not None:
        return np.asarray(grads, dtype=float)
    return np.array([o.smooth.func.gradient(x) for o in problem.objectives])


def solve_subproblem(x, problem: MOProblem, models: QuadModelSet, delta, tol=DEFAULT_TOL,
                     grads=None, debug_dump: Optional[str] = None) -> SubproblemSolution:
    """Minimize the max of the composite quadratic models over the ball.

    ``grads`` are the smooth gradients at ``x`` (computed without counting
    when omitted). The returned ``t`` is the model value ``Q(x, d)`` at the
    returned direction, and ``lam``/``mu`` are the multipliers of the
    optimality system, with ``mu`` scaled so that the ball contributes
    ``mu * d`` to stationarity.
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    x = np.asarray(x, dtype=float)
    prog = EpigraphProgram(x, problem, _gradients(problem, x, grads), models.B, delta)
    if debug_dump:
        prog.dump(debug_dump)
    return prog.solve(tol)


def theta(x, problem: MOProblem, delta, tol=DEFAULT_TOL, grads=None) -> float:
    """Optimal value of the linearized (curvature-free) subproblem.

    Zero exactly at critical points and negative elsewhere.
    """
    x = np.asarray(x, dtype=float)
    zeros = [np.zeros((problem.n, problem.n))] * problem.m
    prog = EpigraphProgram(x, problem, _gradients(problem, x, grads), zeros, delta)
    return prog.solve(tol).t


def model_value(x, problem: MOProblem, hessians, d, grads=None) -> float:
    """``Q(x, d)`` for a single direction."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    grads = _gradients(problem, x, grads)
    vals = [grads[j] @ d + 0.5 * d @ hessians[j] @ d + o.nonsmooth.increment(x, d)
            for j, o in enumerate(problem.objectives)]
    return float(max(vals))


# --------------------------------------------------------------------------
# brute-force oracle


def _batch_nonsmooth(term, Y):
    if isinstance(term, Zero):
        return np.zeros(len(Y))
    if isinstance(term, WeightedL1):
        return 0.5 * term.nu * np.abs(Y).sum(axis=1)
    vals = [0.5 * ((Y @ p.P) * Y).sum(axis=1) + Y @ p.q + p.r for p in term.pieces]
    return np.max(vals, axis=0)


def _batch_model(x, problem, grads, hessians, D):
    Y = x + D
    out = np.full(len(D), -np.inf)
    for j, obj in enumerate(problem.objectives):
        gx = obj.nonsmooth.value(x)
        qj = (D @ grads[j] + 0.5 * ((D @ hessians[j]) * D).sum(axis=1)
              + _batch_nonsmooth(obj.nonsmooth, Y) - gx)
        out = np.maximum(out, qj)
    return out


def _project_ball(D, delta):
    norms = np.linalg.norm(D, axis=1)
    scale = np.where(norms > delta, delta / np.maximum(norms, 1e-300), 1.0)
    return D * scale[:, None]


def grid_oracle(x, problem: MOProblem, models, delta, resolution=64, zoom_rounds=30,
                grads=None):
    """Exhaustive grid search over the ball, then repeated local zooming.

    Only for ``n <= 2``. ``models`` is a :class:`QuadModelSet` or a list of
    matrices. Returns ``(d, t)``; ``d = 0`` is always a candidate, so
    ``t <= 0``.
    """
    n = problem.n
    if n > 2:
        raise ValueError("grid oracle supports n <= 2 only")
    if not delta > 0:
        raise ValueError("trust-region radius must be positive")
    x = np.asarray(x, dtype=float)
    grads = _gradients(problem, x, grads)
    hessians = models.B if isinstance(models, QuadModelSet) else list(models)

    if n == 1:
        D = np.linspace(-delta, delta, 4 * resolution + 1)[:, None]
    else:
        radii = np.linspace(0.0, delta, resolution + 1)[1:]
        ang = np.linspace(0.0, 2 * np.pi, 4 * resolution, endpoint=False)
        D = np.stack([np.outer(radii, np.cos(ang)).ravel(),
                      np.outer(radii, np.sin(ang)).ravel()], axis=1)
    D = np.vstack([np.zeros((1, n)), D])
    vals = _batch_model(x, problem, grads, hessians, D)
    k = int(np.argmin(vals))
    best_d, best_t = D[k].copy(), float(vals[k])

    h = delta / resolution
    offsets = np.linspace(-2.0, 2.0, 21)
    if n == 1:
        local = offsets[:, None]
    else:
        gx, gy = np.meshgrid(offsets, offsets)
        local = np.stack([gx.ravel(), gy.ravel()], axis=1)
    for _ in range(zoom_rounds):
        C = _project_ball(best_d + h * local, delta)
        vals = _batch_model(x, problem, grads, hessians, C)
        k = int(np.argmin(vals))
        if vals[k] < best_t:
            best_d, best_t = C[k].copy(), float(vals[k])
        h *= 0.35
    if n == 2:
        # a stencil stalls in narrow kink valleys; cuts do not
        d, t = _ellipsoid_polish(x, problem, grads, hessians, delta, upper=best_t)
        if t < best_t:
            best_d, best_t = d, t
    return best_d, best_t


def _nonsmooth_subgradient(term, y):
    if isinstance(term, Zero):
        return np.zeros_like(y)
    if isinstance(term, WeightedL1):
        return 0.5 * term.nu * np.sign(y)
    k = int(np.argmax(term.piece_values(y)))
    return term.pieces[k].gradient(y)


def _ellipsoid_polish(x, problem, grads, hessians, delta, upper=0.0, max_iter=2000):
    """Deep-cut ellipsoid method on the model over the ball (n = 2).

    ``upper`` is a known model value; every cut keeps the points whose
    model value can still be at most the best value seen. The ellipsoid
    starts as the ball itself and the best centre seen is kept.
    """
    n = problem.n
    c = np.zeros(n)
    P = delta**2 * np.eye(n)
    best_d, best_t = np.zeros(n), float(_batch_model(x, problem, grads, hessians, c[None])[0])
    bound = min(upper, best_t)
    gx = [obj.nonsmooth.value(x) for obj in problem.objectives]
    for _ in range(max_iter):
        if not np.trace(P) > (1e-10 * delta) ** 2:
            break
        cc = float(c @ c)
        if cc > delta**2:
            g = c.copy()
            excess = cc - np.sqrt(cc) * delta  # c'(z - c) <= -excess on the ball
        else:
            vals = [grads[j] @ c + 0.5 * c @ hessians[j] @ c + obj.nonsmooth.value(x + c) - gx[j]
                    for j, obj in enumerate(problem.objectives)]
            j = int(np.argmax(vals))
            if vals[j] < best_t:
                best_d, best_t = c.copy(), float(vals[j])
                bound = min(bound, best_t)
            g = grads[j] + hessians[j] @ c + _nonsmooth_subgradient(problem.objectives[j].nonsmooth,
                                                                    x + c)
            excess = vals[j] - bound
        Pg = P @ g
        gPg = float(g @ Pg)
        if not gPg > 0:
            break
        root = np.sqrt(gPg)
        alpha = excess / root
        if alpha >= 1.0:
            break  # nothing better left inside
        alpha = max(alpha, 0.0)
        b = Pg / root
        c = c - (1.0 + n * alpha) / (n + 1) * b
        P = (n * n * (1.0 - alpha**2) / (n * n - 1.0)
             * (P - 2.0 * (1.0 + n * alpha) / ((n + 1) * (1.0 + alpha)) * np.outer(b, b)))
        P = 0.5 * (P + P.T)
    return best_d, best_t
