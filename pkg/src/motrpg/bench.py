"""Benchmark catalog, start sampling, multi-start runs and Pareto archives.

Nonsmooth stand-ins
-------------------
The catalog pairs classical smooth families with nonsmooth terms that
generalize the ones of ``Example1``. Names carry a ``*`` to make clear they
are local definitions. For ``y`` in R^n, ``c = (2, -2, 2, -2, ...)`` and
``e_k`` the k-th unit vector (index taken modulo n):

``gA*``  objective 1: ``max{||y - c||^2, y_1^2 + 8 y_n}``
         objective 2: ``max{5 y_1 + y_n, ||y||^2}``
         objective 3: ``max{||y||^2, -y_1}``
``gB*``  every objective: ``max{mean(y), -mean(y), (y_1 - y_n) / 2, ||y||^2 / 2 - 1}``
``gC*``  objective j: ``max{||y - e_j||^2 / 2, ||y||^2 / 2}``
``gF*``  every objective: ``max{||y||^2 / 2, ||y - 1||^2 / 2}``
``L1``   objective j: ``(nu_j / 2) ||y||_1`` with ``nu = (0.30, 1.06, 1.84)``

For n = 2 the ``gA*`` pair is exactly the example's ``(g_1, g_2)``.

Start sampling
--------------
Starts come from SplitMix64: ``state += 0x9E3779B97F4A7C15``, then
``z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9``,
``z = (z ^ (z >> 27)) * 0x94D049BB133111EB``, ``z ^= z >> 31`` (all mod
2^64). A uniform draw is ``(z >> 11) * 2^-53`` and coordinate i of a start
is ``lb_i + u * (ub_i - lb_i)``, filled start by start, coordinate by
coordinate, from a state initialized to the seed.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .families import FAMILIES
from .mopg import MOPGConfig, solve_mopg
from .problem import (
    Box,
    ClosedForm,
    LeastSquares,
    MaxOfQuadratics,
    MOProblem,
    Objective,
    QuadraticPiece,
    SmoothTerm,
    WeightedL1,
    Zero,
    affine_piece,
    problem_from_dict,
    problem_to_dict,
    sphere_piece,
)
from .trust_region import SolverConfig, SolverRun, solve

SCHEMA_VERSION = 1
L1_NU = (0.30, 1.06, 1.84)
DEDUP_TOL = 1e-6

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, count: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(count)])


# --------------------------------------------------------------------------
# nonsmooth stand-ins


def _cycle_center(n):
    return np.array([2.0 if i % 2 == 0 else -2.0 for i in range(n)])


def _gA(j, n):
    e1 = np.zeros(n)
    e1[0] = 1.0
    en = np.zeros(n)
    en[-1] = 1.0
    if j == 0:
        P = np.zeros((n, n))
        P[0, 0] = 2.0
        return MaxOfQuadratics((sphere_piece(_cycle_center(n)),
                                QuadraticPiece(P, 8.0 * en, 0.0)))
    if j == 1:
        return MaxOfQuadratics((affine_piece(5.0 * e1 + en), sphere_piece(np.zeros(n))))
    return MaxOfQuadratics((sphere_piece(np.zeros(n)), affine_piece(-e1)))


def _gB(j, n):
    mean = np.full(n, 1.0 / n)
    tilt = np.zeros(n)
    tilt[0] += 0.5
    tilt[-1] -= 0.5
    # the quadratic piece keeps F bounded below when f is linear
    return MaxOfQuadratics((affine_piece(mean), affine_piece(-mean), affine_piece(tilt),
                            sphere_piece(np.zeros(n), 0.5, -1.0)))


def _gC(j, n):
    e = np.zeros(n)
    e[j % n] = 1.0
    return MaxOfQuadratics((sphere_piece(e, 0.5), sphere_piece(np.zeros(n), 0.5)))


def _gF(j, n):
    return MaxOfQuadratics((sphere_piece(np.zeros(n), 0.5), sphere_piece(np.ones(n), 0.5)))


def _l1(j, n):
    return WeightedL1(L1_NU[j % len(L1_NU)])


def _zero(j, n):
    return Zero()


NONSMOOTH = {"gA*": _gA, "gB*": _gB, "gC*": _gC, "gF*": _gF, "L1": _l1, "zero": _zero}


# --------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class TestProblemSpec:
    id: str
    m: int
    n: int
    smooth: str
    nonsmooth: str
    lb: tuple
    ub: tuple

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if len(self.lb) != self.n or len(self.ub) != self.n:
            raise ValueError(f"{self.id}: box dimension mismatch")
        if not all(a < b for a, b in zip(self.lb, self.ub)):
            raise ValueError(f"{self.id}: need lb < ub")

    @property
    def box(self) -> Box:
        return Box(np.array(self.lb), np.array(self.ub))

    def to_dict(self):
        return {"id": self.id, "m": self.m, "n": self.n, "smooth": self.smooth,
                "nonsmooth": self.nonsmooth, "lb": list(self.lb), "ub": list(self.ub)}


CATALOG: dict[str, TestProblemSpec] = {}


def _add(smooth, nonsmooth, n, lo, hi, id=None):
    m = 3 if smooth.startswith("MOLS") else FAMILIES[smooth].m
    lo = (lo,) * n if np.isscalar(lo) else tuple(lo)
    hi = (hi,) * n if np.isscalar(hi) else tuple(hi)
    if id is None:
        id = f"{smooth}+{nonsmooth}" + (f"-n{n}" if _needs_dim_tag(smooth, nonsmooth, n) else "")
    CATALOG[id] = TestProblemSpec(id, m, n, smooth, nonsmooth, lo, hi)


def _needs_dim_tag(smooth, nonsmooth, n):
    return FAMILIES.get(smooth) is not None and FAMILIES[smooth].n is None


_add("BK1", "gA*", 2, -3.0, 7.0, id="Example1")
_add("BK1", "gA*", 2, -5.0, 7.5)
_add("BK1", "gB*", 2, -5.0, 7.5)
_add("FDS", "gC*", 3, -2.0, 4.0)
_add("FDS", "L1", 5, -2.0, 2.0)
_add("FDS", "L1", 8, -2.0, 2.0)
_add("IKK1", "L1", 2, -2.0, 3.0)
_add("Jin1", "gA*", 2, -3.0, 5.0)
_add("Jin1", "gB*", 2, -3.0, 5.0)
_add("Jin1", "gF*", 4, -5.0, 10.0)
_add("Jin1", "L1", 10, -5.0, 5.0)
_add("Lovison1", "gA*", 2, -3.0, 5.0)
_add("Lovison1", "gB*", 2, -3.0, 5.0)
_add("Lovison4", "gB*", 2, (-10.0, -5.0), (5.0, 5.0))
_add("LRS1", "gB*", 2, -50.0, 50.0)
_add("LRS1", "gA*", 2, -50.0, 50.0)
_add("MOLS1", "L1", 3, -1.0, 1.0, id="MOLS1")
_add("MHHM1", "L1", 1, -4.0, 4.0)
_add("MHHM2", "L1", 2, -4.0, 4.0)
_add("MOP1", "L1", 1, -100.0, 100.0)
_add("MOP7", "L1", 2, -4.0, 4.0)
_add("SP1", "gA*", 2, -1.0, 5.0)
_add("SP1", "gB*", 2, -1.0, 5.0)
_add("SSFY1", "gA*", 2, -50.0, 50.0)
_add("SSFY1", "gB*", 2, -50.0, 50.0)
_add("VFM1", "L1", 2, -2.0, 2.0)
_add("VU1", "gA*", 2, -3.0, 3.0)
_add("VU1", "gB*", 2, -3.0, 3.0)
_add("VU2", "gA*", 2, -3.0, 3.0)
_add("VU2", "gB*", 2, -3.0, 3.0)
_add("ZLT1", "gC*", 3, -100.0, 100.0)
_add("ZLT1", "L1", 10, -5.0, 5.0)

# one representative per smooth family named as a required benchmark row
BENCHMARK_CORE = (
    "Example1", "BK1+gB*", "Jin1+gA*-n2", "Lovison1+gA*", "Lovison4+gB*", "LRS1+gA*",
    "SP1+gA*", "SSFY1+gA*", "VU1+gA*", "VU2+gB*", "MOP7+L1", "MOLS1",
)

FIXTURES = {"MOLS-fixture-1": "mols_fixture_1.json"}


def list_problems():
    return sorted(CATALOG) + sorted(FIXTURES)


# --------------------------------------------------------------------------
# least-squares instances


@dataclass(eq=False)
class MOLSInstance:
    A: list  # one (rows, n) array per objective
    b: list
    nu: tuple
    seed: int

    def check_ranges(self):
        for A, b in zip(self.A, self.b):
            if A.min() < 0 or A.max() > 5 or b.min() < 0 or b.max() > 10:
                return False
        return True

    def to_problem(self, name="MOLS", box: Optional[Box] = None) -> MOProblem:
        objectives = tuple(
            Objective(SmoothTerm(LeastSquares(A, b)), WeightedL1(nu))
            for A, b, nu in zip(self.A, self.b, self.nu))
        n = self.A[0].shape[1]
        if box is None:
            box = Box.uniform(-1.0, 1.0, n)
        return MOProblem(name, n, objectives, box)


def generate_mols(seed: int, m=3, n=3, rows=10, nu=L1_NU) -> MOLSInstance:
    """Draw ``A_j`` entries in [0, 5] and ``b_j`` in [0, 10] from SplitMix64."""
    rng = SplitMix64(seed)
    A, b = [], []
    for _ in range(m):
        A.append(5.0 * rng.uniforms(rows * n).reshape(rows, n))
        b.append(10.0 * rng.uniforms(rows))
    return MOLSInstance(A, b, tuple(nu[:m]), seed)


def load_fixture(name_or_path) -> tuple[MOProblem, dict]:
    """Load a problem fixture by registered name or file path."""
    if name_or_path in FIXTURES:
        text = resources.files("motrpg").joinpath("fixtures").joinpath(FIXTURES[name_or_path]).read_text()
    else:
        with open(name_or_path) as fh:
            text = fh.read()
    data = json.loads(text)
    return problem_from_dict(data["problem"]), data


def fixture_dict(problem: MOProblem, seed: Optional[int] = None) -> dict:
    return {"schema_version": SCHEMA_VERSION, "seed": seed, "problem": problem_to_dict(problem)}


def instantiate(spec, gradient_mode="analytic") -> MOProblem:
    """Build a problem from a catalog id, a ``TestProblemSpec`` or a fixture."""
    if isinstance(spec, str):
        if spec in FIXTURES or (spec not in CATALOG and os.path.exists(spec)):
            return load_fixture(spec)[0]
        if spec not in CATALOG:
            raise KeyError(f"unknown problem {spec!r}")
        spec = CATALOG[spec]
    if spec.smooth == "MOLS1":
        problem = load_fixture("MOLS-fixture-1")[0]
        return MOProblem(spec.id, problem.n, problem.objectives, spec.box)
    fam = FAMILIES[spec.smooth]
    make_g = NONSMOOTH[spec.nonsmooth]
    objectives = tuple(
        Objective(SmoothTerm(ClosedForm(spec.smooth, j, spec.n), gradient_mode), make_g(j, spec.n))
        for j in range(fam.m))
    return MOProblem(spec.id, spec.n, objectives, spec.box, convex=fam.convex)


# --------------------------------------------------------------------------
# starts and dominance


def sample_starts(box, count=100, seed=0) -> list:
    if isinstance(box, TestProblemSpec):
        box = box.box
    elif isinstance(box, MOProblem):
        if box.box is None:
            raise ValueError(f"problem {box.name} has no sampling box")
        box = box.box
    rng = SplitMix64(seed)
    width = box.ub - box.lb
    return [box.lb + rng.uniforms(box.lb.size) * width for _ in range(count)]


def dominates(a, b) -> bool:
    return bool(np.all(a <= b) and np.any(a < b))


def nondominated_filter(points) -> list:
    """Indices of points not dominated by any other point."""
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        return []
    P = P.reshape(len(P), -1)
    le = np.all(P[:, None, :] <= P[None, :, :], axis=2)
    lt = np.any(P[:, None, :] < P[None, :, :], axis=2)
    dominated = np.any(le & lt, axis=0)  # column i dominated by some row
    return [int(i) for i in np.flatnonzero(~dominated)]


@dataclass
class ArchiveEntry:
    x: np.ndarray
    F: np.ndarray
    solver: str
    start: int

    def to_dict(self):
        return {"solver": self.solver, "start": self.start, "x": self.x.tolist(),
                "F": self.F.tolist()}


@dataclass
class ParetoArchive:
    """Nondominated terminal points, deduplicated within ``dedup_tol`` in F."""

    entries: list = field(default_factory=list)
    dedup_tol: float = DEDUP_TOL

    @classmethod
    def build(cls, entries, dedup_tol=DEDUP_TOL):
        arch = cls(list(entries), dedup_tol)
        arch.filter()
        return arch

    def filter(self):
        keep = nondominated_filter([e.F for e in self.entries])
        kept = []
        for i in keep:
            e = self.entries[i]
            if any(np.max(np.abs(e.F - k.F)) <= self.dedup_tol for k in kept):
                continue
            kept.append(e)
        self.entries = kept
        return self

    def merge(self, other: "ParetoArchive") -> "ParetoArchive":
        return ParetoArchive.build(self.entries + other.entries, self.dedup_tol)

    def __len__(self):
        return len(self.entries)

    @property
    def F(self) -> np.ndarray:
        return np.array([e.F for e in self.entries])

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "dedup_tol": self.dedup_tol,
                "entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d):
        entries = [ArchiveEntry(np.array(e["x"]), np.array(e["F"]), e["solver"], e["start"])
                   for e in d["entries"]]
        return cls(entries, d.get("dedup_tol", DEDUP_TOL))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if not self.entries:
            writer.writerow(["solver", "start"])
            return buf.getvalue()
        n, m = self.entries[0].x.size, self.entries[0].F.size
        writer.writerow(["solver", "start"] + [f"x{i + 1}" for i in range(n)]
                        + [f"F{j + 1}" for j in range(m)])
        for e in self.entries:
            writer.writerow([e.solver, e.start] + [repr(float(v)) for v in e.x]
                            + [repr(float(v)) for v in e.F])
        return buf.getvalue()


# --------------------------------------------------------------------------
# multi-start


SOLVERS = {"MOTRPG": (solve, SolverConfig), "MOPG": (solve_mopg, MOPGConfig)}


def default_config(solver_id):
    return SOLVERS[solver_id][1]()


@dataclass
class StartFailure:
    start: int
    error: str

    def to_dict(self):
        return {"start": self.start, "error": self.error}


@dataclass
class MultiStartResult:
    solver: str
    problem: str
    archive: ParetoArchive
    runs: list  # SolverRun per successful start, in start order
    failures: list

    @property
    def raw_F(self):
        return np.array([r.F for r in self.runs])


def _run_one(args):
    problem, solver_id, index, x0, config = args
    try:
        return index, SOLVERS[solver_id][0](problem, x0, config), None
    except Exception as exc:  # recorded per start, the batch goes on
        return index, None, f"{type(exc).__name__}: {exc}"


def multistart_run(problem: MOProblem, solver_id: str, starts: Sequence, config=None,
                   jobs: int = 1) -> MultiStartResult:
    if solver_id not in SOLVERS:
        raise KeyError(f"unknown solver {solver_id!r}")
    config = config if config is not None else default_config(solver_id)
    tasks = [(problem, solver_id, i, np.asarray(x0, dtype=float), config)
             for i, x0 in enumerate(starts)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_run_one(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    runs: list[SolverRun] = []
    failures = []
    entries = []
    for i, run, err in results:
        if run is None:
            failures.append(StartFailure(i, err))
            continue
        runs.append(run)
        entries.append(ArchiveEntry(run.x, run.F, solver_id, i))
    return MultiStartResult(solver_id, problem.name, ParetoArchive.build(entries), runs, failures)
