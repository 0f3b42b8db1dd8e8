"""Composite multi-objective problems ``F_j = f_j + g_j``.

Smooth parts are either least-squares terms or closed-form families
(:mod:`motrpg.families`). Nonsmooth parts come from a closed algebra:
zero, weighted l1 and pointwise maxima of convex quadratics. That algebra
is what the epigraph subproblem solver knows how to handle exactly.

Problem objects are immutable; evaluation counting lives in
:class:`Evaluator`, one per solver run.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .families import FAMILIES

SQRT_EPS = float(np.sqrt(np.finfo(float).eps))


class NonFiniteError(ArithmeticError):
    """Raised when problem data produce a NaN or infinite value."""


def _as_vector(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != n:
        raise ValueError(f"expected a vector of dimension {n}, got shape {x.shape}")
    return x


def _finite(value, what: str):
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"non-finite {what}: {value}")
    return value


# --------------------------------------------------------------------------
# smooth terms


@dataclass(frozen=True, eq=False)
class LeastSquares:
    """``f(x) = 0.5 * ||A x - b||^2``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.size or b.size < 1:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.size} entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def value(self, x):
        r = self.A @ x - self.b
        return 0.5 * float(r @ r)

    def gradient(self, x):
        return self.A.T @ (self.A @ x - self.b)

    def to_dict(self):
        return {"kind": "least_squares", "rows": self.A.shape[0], "cols": self.n,
                "A": self.A.ravel().tolist(), "b": self.b.tolist()}


@dataclass(frozen=True)
class ClosedForm:
    """Objective ``index`` of a registered closed-form family."""

    family: str
    index: int
    n: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KeyError(f"unknown smooth family {self.family!r}")
        fam = FAMILIES[self.family]
        fam.check_dim(self.n)
        if not 0 <= self.index < fam.m:
            raise ValueError(f"{self.family} has {fam.m} objectives, index {self.index}")

    @property
    def convex(self) -> bool:
        return FAMILIES[self.family].convex

    def value(self, x):
        return FAMILIES[self.family].pieces[self.index][0](x)

    def gradient(self, x):
        return np.asarray(FAMILIES[self.family].pieces[self.index][1](x), dtype=float)

    def to_dict(self):
        return {"kind": "closed_form", "family": self.family, "index": self.index,
                "n": self.n}


SmoothFunction = Union[LeastSquares, ClosedForm]


@dataclass(frozen=True)
class SmoothTerm:
    """A smooth convex term with its gradient mode.

    ``gradient_mode`` is ``"analytic"`` or ``"forward"``; in forward mode the
    step for coordinate ``i`` is ``fd_step * (1 + |x_i|)``.
    """

    func: SmoothFunction
    gradient_mode: str = "analytic"
    fd_step: float = SQRT_EPS

    def __post_init__(self):
        if self.gradient_mode not in ("analytic", "forward"):
            raise ValueError(f"unknown gradient mode {self.gradient_mode!r}")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")

    @property
    def n(self) -> int:
        return self.func.n

    def to_dict(self):
        out = self.func.to_dict()
        out["gradient_mode"] = self.gradient_mode
        if self.gradient_mode == "forward":
            out["fd_step"] = self.fd_step
        return out


# --------------------------------------------------------------------------
# nonsmooth terms


@dataclass(frozen=True)
class ActiveSubgradient:
    """Subgradient information of ``g_j`` at a point.

    ``base`` plus the box ``[-half_width, half_width]`` on ``free_coords``
    describes weighted-l1 subdifferentials; for maxima of quadratics the
    generators are the gradients of the active pieces.
    """

    objective: int
    active_pieces: tuple
    generators: np.ndarray  # (k, n)


class Zero:
    kind = "zero"

    def value(self, y):
        return 0.0

    def increment(self, x, d):
        return 0.0

    def active_subgradient(self, x, tau, objective=0):
        return ActiveSubgradient(objective, (0,), np.zeros((1, x.size)))

    def to_dict(self):
        return {"kind": "zero"}

    def __eq__(self, other):
        return isinstance(other, Zero)

    def __hash__(self):
        return hash("zero")

    def __repr__(self):
        return "Zero()"


@dataclass(frozen=True)
class WeightedL1:
    """``g(y) = (nu / 2) * ||y||_1``."""

    nu: float
    kind = "weighted_l1"

    def __post_init__(self):
        if not self.nu >= 0:
            raise ValueError("nu must be nonnegative")

    def value(self, y):
        return 0.5 * self.nu * float(np.sum(np.abs(y)))

    def increment(self, x, d):
        x = np.asarray(x, dtype=float)
        d = np.asarray(d, dtype=float)
        # exact where the sign is kept, so tiny steps are not lost to rounding
        keep = np.abs(d) <= np.abs(x)
        inc = np.where(keep, np.sign(x) * d, np.abs(x + d) - np.abs(x))
        return 0.5 * self.nu * float(np.sum(inc))

    def active_subgradient(self, x, tau, objective=0, max_free=16):
        """Generators are the vertices of the l1 subdifferential box.

        Coordinates with ``|x_i| <= tau`` contribute the interval
        ``[-nu/2, nu/2]``, represented by its two endpoints, so ``k`` such
        coordinates produce ``2**k`` generators.
        """
        half = 0.5 * self.nu
        free = np.flatnonzero(np.abs(x) <= tau)
        if free.size > max_free:
            raise ValueError(f"{free.size} coordinates at the kink, limit {max_free}")
        base = half * np.sign(x)
        base[free] = 0.0
        if free.size == 0 or half == 0.0:
            return ActiveSubgradient(objective, tuple(free.tolist()), base[None, :])
        gens = []
        for signs in itertools.product((-1.0, 1.0), repeat=free.size):
            v = base.copy()
            v[free] = half * np.asarray(signs)
            gens.append(v)
        return ActiveSubgradient(objective, tuple(free.tolist()), np.array(gens))

    def to_dict(self):
        return {"kind": "weighted_l1", "nu": self.nu}


@dataclass(frozen=True, eq=False)
class QuadraticPiece:
    """``p(y) = 0.5 * y'Py + q'y + r`` with ``P`` positive semidefinite."""

    P: np.ndarray
    q: np.ndarray
    r: float = 0.0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        P = np.asarray(self.P, dtype=float).reshape(q.size, q.size)
        if not np.allclose(P, P.T):
            raise ValueError("piece matrix must be symmetric")
        if q.size and np.linalg.eigvalsh(P).min() < -1e-12 * (1 + np.abs(P).max()):
            raise ValueError("piece matrix must be positive semidefinite")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", float(self.r))

    def value(self, y):
        return 0.5 * float(y @ self.P @ y) + float(self.q @ y) + self.r

    def gradient(self, y):
        return self.P @ y + self.q

    def to_dict(self):
        return {"P": self.P.ravel().tolist(), "q": self.q.tolist(), "r": self.r}


def affine_piece(q, r=0.0) -> QuadraticPiece:
    q = np.asarray(q, dtype=float)
    return QuadraticPiece(np.zeros((q.size, q.size)), q, r)


def sphere_piece(center, scale=1.0, offset=0.0) -> QuadraticPiece:
    """``scale * ||y - center||^2 + offset``."""
    c = np.asarray(center, dtype=float)
    return QuadraticPiece(2.0 * scale * np.eye(c.size), -2.0 * scale * c,
                          scale * float(c @ c) + offset)


@dataclass(frozen=True, eq=False)
class MaxOfQuadratics:
    pieces: tuple
    kind = "max_of_quadratics"

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            raise ValueError("max-of-quadratics needs at least one piece")
        if len({p.q.size for p in pieces}) != 1:
            raise ValueError("pieces must share a dimension")
        object.__setattr__(self, "pieces", pieces)

    @property
    def n(self):
        return self.pieces[0].q.size

    def piece_values(self, y):
        return np.array([p.value(y) for p in self.pieces])

    def value(self, y):
        return float(self.piece_values(y).max())

    def increment(self, x, d):
        """``g(x + d) - g(x)`` without cancellation between large values."""
        vx = self.piece_values(x)
        gx = vx.max()
        best = -np.inf
        for p, v in zip(self.pieces, vx):
            best = max(best, (v - gx) + float(p.gradient(x) @ d) + 0.5 * float(d @ p.P @ d))
        return best

    def active_subgradient(self, x, tau, objective=0):
        vals = self.piece_values(x)
        active = np.flatnonzero(vals.max() - vals <= tau)
        gens = np.array([self.pieces[i].gradient(x) for i in active])
        return ActiveSubgradient(objective, tuple(active.tolist()), gens)

    def to_dict(self):
        return {"kind": "max_of_quadratics", "pieces": [p.to_dict() for p in self.pieces]}


NonsmoothTerm = Union[Zero, WeightedL1, MaxOfQuadratics]


# --------------------------------------------------------------------------
# problems


@dataclass(frozen=True)
class Objective:
    smooth: SmoothTerm
    nonsmooth: NonsmoothTerm = field(default_factory=Zero)


@dataclass(frozen=True, eq=False)
class Box:
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        lb = np.asarray(self.lb, dtype=float).reshape(-1)
        ub = np.asarray(self.ub, dtype=float).reshape(-1)
        if lb.shape != ub.shape or not np.all(lb < ub):
            raise ValueError("box needs lb < ub componentwise")
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @classmethod
    def uniform(cls, lo, hi, n):
        return cls(np.full(n, float(lo)), np.full(n, float(hi)))


@dataclass(frozen=True, eq=False)
class MOProblem:
    name: str
    n: int
    objectives: tuple
    box: Optional[Box] = None
    convex: bool = True

    def __post_init__(self):
        objectives = tuple(self.objectives)
        if not objectives:
            raise ValueError("a problem needs at least one objective")
        for obj in objectives:
            if obj.smooth.n != self.n:
                raise ValueError(f"smooth term has n={obj.smooth.n}, problem n={self.n}")
            if isinstance(obj.nonsmooth, MaxOfQuadratics) and obj.nonsmooth.n != self.n:
                raise ValueError("nonsmooth term dimension mismatch")
        if self.box is not None and self.box.lb.size != self.n:
            raise ValueError("box dimension mismatch")
        object.__setattr__(self, "objectives", objectives)

    @property
    def m(self) -> int:
        return len(self.objectives)


def default_activity_tol(gval: float) -> float:
    return 1e-8 * (1.0 + abs(gval))


# --------------------------------------------------------------------------
# evaluation with counting


@dataclass
class EvalCounters:
    f_evals: int = 0
    grad_evals: int = 0
    g_evals: int = 0

    def as_dict(self):
        return {"f_evals": self.f_evals, "grad_evals": self.grad_evals,
                "g_evals": self.g_evals}


class Evaluator:
    """Evaluates a problem and counts every call.

    The last smooth value per objective is cached so that a forward
    difference right after a function evaluation at the same point does not
    pay for ``f_j(x)`` twice.
    """

    def __init__(self, problem: MOProblem, counters: Optional[EvalCounters] = None):
        self.problem = problem
        self.counters = counters if counters is not None else EvalCounters()
        self._cache: dict[int, tuple[bytes, float]] = {}

    def _check(self, x):
        return _as_vector(x, self.problem.n)

    def f(self, x, j):
        x = self._check(x)
        val = _finite(self.problem.objectives[j].smooth.func.value(x), f"f_{j}")
        self.counters.f_evals += 1
        self._cache[j] = (x.tobytes(), val)
        return val

    def g(self, x, j):
        x = self._check(x)
        self.counters.g_evals += 1
        return _finite(self.problem.objectives[j].nonsmooth.value(x), f"g_{j}")

    def F(self, x):
        x = self._check(x)
        return np.array([self.f(x, j) + self.g(x, j) for j in range(self.problem.m)])

    def grad(self, x, j):
        x = self._check(x)
        term = self.problem.objectives[j].smooth
        if term.gradient_mode == "analytic":
            gvec = term.func.gradient(x)
        else:
            cached = self._cache.get(j)
            if cached is not None and cached[0] == x.tobytes():
                fx = cached[1]
            else:
                fx = self.f(x, j)
            gvec = np.empty(x.size)
            for i in range(x.size):
                h = term.fd_step * (1.0 + abs(x[i]))
                xp = x.copy()
                xp[i] += h
                gvec[i] = (term.func.value(xp) - fx) / h
            self.counters.f_evals += x.size
        self.counters.grad_evals += 1
        return _finite(np.asarray(gvec, dtype=float), f"gradient of f_{j}")

    def grads(self, x):
        return np.array([self.grad(x, j) for j in range(self.problem.m)])

    def g_active_subgradients(self, x, j, tau=None):
        x = self._check(x)
        term = self.problem.objectives[j].nonsmooth
        if tau is None:
            tau = default_activity_tol(term.value(x))
        if not tau > 0:
            raise ValueError("activity tolerance must be positive")
        return term.active_subgradient(x, tau, objective=j)


def eval_F(problem: MOProblem, x, counters: Optional[EvalCounters] = None):
    return Evaluator(problem, counters).F(x)


# --------------------------------------------------------------------------
# JSON round trip


def problem_to_dict(problem: MOProblem) -> dict:
    out = {
        "name": problem.name,
        "m": problem.m,
        "n": problem.n,
        "convex": problem.convex,
        "objectives": [{"smooth": o.smooth.to_dict(), "nonsmooth": o.nonsmooth.to_dict()}
                       for o in problem.objectives],
    }
    if problem.box is not None:
        out["box"] = {"lb": problem.box.lb.tolist(), "ub": problem.box.ub.tolist()}
    return out


def _smooth_from_dict(d: dict) -> SmoothTerm:
    kind = d["kind"]
    if kind == "least_squares":
        A = np.asarray(d["A"], dtype=float).reshape(d["rows"], d["cols"])
        func = LeastSquares(A, d["b"])
    elif kind == "closed_form":
        func = ClosedForm(d["family"], int(d["index"]), int(d["n"]))
    else:
        raise ValueError(f"unknown smooth kind {kind!r}")
    return SmoothTerm(func, d.get("gradient_mode", "analytic"), d.get("fd_step", SQRT_EPS))


def _nonsmooth_from_dict(d: dict, n: int) -> NonsmoothTerm:
    kind = d["kind"]
    if kind == "zero":
        return Zero()
    if kind == "weighted_l1":
        return WeightedL1(float(d["nu"]))
    if kind == "max_of_quadratics":
        return MaxOfQuadratics(tuple(
            QuadraticPiece(np.reshape(p["P"], (n, n)), p["q"], p.get("r", 0.0))
            for p in d["pieces"]))
    raise ValueError(f"unknown nonsmooth kind {kind!r}")


def problem_from_dict(d: dict) -> MOProblem:
    n = int(d["n"])
    objectives = tuple(
        Objective(_smooth_from_dict(o["smooth"]), _nonsmooth_from_dict(o["nonsmooth"], n))
        for o in d["objectives"])
    if "m" in d and int(d["m"]) != len(objectives):
        raise ValueError("m does not match the number of objectives")
    box = Box(d["box"]["lb"], d["box"]["ub"]) if d.get("box") else None
    return MOProblem(d["name"], n, objectives, box, bool(d.get("convex", True)))
