"""Front quality metrics, evaluation accounting and performance profiles.

Formula variants used here:

* purity: share of a solver's front lying within ``tol`` (max norm) of a
  point of the reference front, the nondominated union of all fronts;
* Gamma spread: largest gap between consecutive sorted values of any
  single objective;
* Delta spread: per objective ``(d0 + dN + sum|d_i - mean d|) /
  (d0 + dN + (N - 1) mean d)`` over consecutive gaps ``d_i``, maximized over
  objectives; the extreme gaps ``d0, dN`` are zero unless extremes are given;
* hypervolume: exact measure of the union of boxes ``[p, ref]`` for two or
  three objectives;
* performance profiles: Dolan-More ratios against the best solver per
  problem, with the orientation stated explicitly.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .bench import nondominated_filter

SCHEMA_VERSION = 1
PURITY_TOL = 1e-8
FORMULAS = {
    "purity": "|{p in front_s : dist_inf(p, reference) <= tol}| / |front_s|",
    "gamma": "max_j max_i (f_j[i+1] - f_j[i]) over sorted objective values",
    "delta": "max_j (d0 + dN + sum|d_i - mean d|) / (d0 + dN + (N-1) mean d), d0 = dN = 0",
    "hypervolume": "exact union of [p, ref], ref = max + 0.1 * range over all fronts",
    "fun": "#f + n*#grad (+ n(n+1)/2*#hess for Hessian-based solvers)",
}


def _as_front(front) -> np.ndarray:
    F = np.asarray(front, dtype=float)
    if F.ndim == 1:
        F = F.reshape(1, -1) if F.size else F.reshape(0, 0)
    return F


def reference_front(fronts: Mapping[str, np.ndarray]) -> np.ndarray:
    """Nondominated union of all fronts."""
    parts = [_as_front(f) for f in fronts.values() if len(f)]
    if not parts:
        return np.empty((0, 0))
    allp = np.vstack(parts)
    return allp[nondominated_filter(allp)]


def purity(fronts: Mapping[str, np.ndarray], tol=PURITY_TOL, reference=None) -> dict:
    """Purity per solver; ``None`` for an empty front."""
    ref = _as_front(reference) if reference is not None else reference_front(fronts)
    out = {}
    for sid, front in fronts.items():
        F = _as_front(front)
        if len(F) == 0:
            out[sid] = None
            continue
        if len(ref) == 0:
            out[sid] = 0.0
            continue
        dist = np.max(np.abs(F[:, None, :] - ref[None, :, :]), axis=2).min(axis=1)
        out[sid] = float(np.count_nonzero(dist <= tol)) / len(F)
    return out


def gamma_spread(front) -> float:
    F = _as_front(front)
    if len(F) < 2:
        raise ValueError("Gamma spread needs a front of at least 2 points")
    gaps = np.diff(np.sort(F, axis=0), axis=0)
    return float(gaps.max())


def delta_spread(front, extremes=None) -> float:
    """Delta spread; ``extremes`` is an optional ``(low, high)`` pair of vectors."""
    F = _as_front(front)
    if len(F) < 2:
        raise ValueError("Delta spread needs a front of at least 2 points")
    S = np.sort(F, axis=0)
    gaps = np.diff(S, axis=0)
    best = 0.0
    for j in range(F.shape[1]):
        g = gaps[:, j]
        mean = g.mean()
        d0 = dN = 0.0
        if extremes is not None:
            d0 = abs(S[0, j] - extremes[0][j])
            dN = abs(extremes[1][j] - S[-1, j])
        den = d0 + dN + len(g) * mean
        if den <= 0:
            continue
        best = max(best, (d0 + dN + np.abs(g - mean).sum()) / den)
    return float(best)


def reference_point(fronts) -> np.ndarray:
    """Componentwise max over all fronts plus 10% of the range (1 if flat)."""
    if isinstance(fronts, Mapping):
        fronts = list(fronts.values())
    allp = np.vstack([_as_front(f) for f in fronts if len(f)])
    hi, lo = allp.max(axis=0), allp.min(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return hi + 0.1 * span


def _hv2(P, ref):
    P = P[np.argsort(P[:, 0], kind="stable")]
    total, best_y = 0.0, ref[1]
    for x, y in P:
        if y < best_y:
            total += float((ref[0] - x) * (best_y - y))
            best_y = y
    return total


def hypervolume(front, reference) -> float:
    F = _as_front(front)
    ref = np.asarray(reference, dtype=float)
    if len(F) == 0:
        return 0.0
    m = F.shape[1]
    if m not in (2, 3):
        raise ValueError(f"hypervolume supports 2 or 3 objectives, got {m}")
    inside = np.all(F < ref, axis=1)
    if not inside.all():
        warnings.warn(f"{np.count_nonzero(~inside)} points do not dominate the reference "
                      "point and were excluded", RuntimeWarning, stacklevel=2)
    F = F[inside]
    if len(F) == 0:
        return 0.0
    if m == 2:
        return float(_hv2(F, ref))
    # slice along the third objective
    order = np.argsort(F[:, 2], kind="stable")
    F = F[order]
    levels = np.append(F[:, 2], ref[2])
    total = 0.0
    for k in range(len(F)):
        height = levels[k + 1] - levels[k]
        if height > 0:
            total += _hv2(F[: k + 1, :2], ref[:2]) * height
    return float(total)


# --------------------------------------------------------------------------
# performance profiles


@dataclass
class ProfileCurve:
    solver: str
    ratios: np.ndarray  # one per problem, inf where the solver failed
    orientation: str = "lower-better"

    @property
    def breakpoints(self) -> list:
        """``(tau, rho(tau))`` at every finite ratio."""
        finite = np.unique(self.ratios[np.isfinite(self.ratios)])
        return [(float(t), self.at(t)) for t in finite]

    def at(self, tau) -> float:
        if len(self.ratios) == 0:
            return 0.0
        return float(np.count_nonzero(self.ratios <= tau)) / len(self.ratios)

    def to_dict(self):
        return {"solver": self.solver, "orientation": self.orientation,
                "ratios": [r if math.isfinite(r) else None for r in self.ratios.tolist()],
                "breakpoints": self.breakpoints}


def perf_profile(values: Mapping[str, Mapping[str, Optional[float]]],
                 orientation="lower-better") -> dict:
    """Profiles from ``values[problem][solver]``; missing values count as failures."""
    if orientation not in ("lower-better", "higher-better"):
        raise ValueError(f"unknown orientation {orientation!r}")
    problems = list(values)
    solvers = sorted({s for row in values.values() for s in row})
    ratios = {s: [] for s in solvers}
    for p in problems:
        row = {s: v for s, v in values[p].items() if v is not None and math.isfinite(v)}
        if not row:
            raise ValueError(f"problem {p!r} has no finite value")
        best = min(row.values()) if orientation == "lower-better" else max(row.values())
        for s in solvers:
            v = row.get(s)
            if v is None:
                r = math.inf
            elif v == best:
                r = 1.0
            elif orientation == "lower-better":
                r = v / best if best > 0 else math.inf
            else:
                r = best / v if v > 0 else math.inf
            ratios[s].append(r)
    return {s: ProfileCurve(s, np.array(r, dtype=float), orientation)
            for s, r in ratios.items()}


def profiles_to_csv(curves: Mapping[str, ProfileCurve]) -> str:
    taus = sorted({t for c in curves.values() for t, _ in c.breakpoints} | {1.0})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = sorted(curves)
    writer.writerow(["tau"] + names)
    for t in taus:
        writer.writerow([repr(t)] + [repr(curves[s].at(t)) for s in names])
    return buf.getvalue()


# --------------------------------------------------------------------------
# evaluation accounting


HESSIAN_SOLVERS = {"MONPG"}


@dataclass
class FunCount:
    solver: str
    problem: str
    f: int
    grad: int
    hess: int
    fun: int

    def to_dict(self):
        return {"solver": self.solver, "problem": self.problem, "f": self.f,
                "grad": self.grad, "hess": self.hess, "fun": self.fun}


def fun_evals(counters, n, solver="MOTRPG", problem="", hess_evals=0) -> FunCount:
    """Total function evaluations ``#f + n #grad`` (plus the Hessian term for MONPG)."""
    f, g = counters.f_evals, counters.grad_evals
    total = f + n * g
    if solver in HESSIAN_SOLVERS:
        total += n * (n + 1) // 2 * hess_evals
    elif hess_evals:
        raise ValueError(f"{solver} does not evaluate Hessians")
    return FunCount(solver, problem, f, g, hess_evals, total)


# --------------------------------------------------------------------------
# reports


METRIC_ORIENTATION = {
    "purity": "higher-better",
    "gamma": "lower-better",
    "delta": "lower-better",
    "hypervolume": "higher-better",
    "fun": "lower-better",
}


def _safe(fn, *args):
    try:
        return fn(*args)
    except ValueError:
        return None


def front_metrics(problem: str, n: int, fronts: Mapping[str, np.ndarray],
                  counters: Mapping[str, object]) -> dict:
    """All metrics for one problem; ``fronts`` and ``counters`` keyed by solver."""
    pur = purity(fronts)
    nonempty = {s: f for s, f in fronts.items() if len(f)}
    ref = reference_point(nonempty) if nonempty else None
    m = next(iter(nonempty.values())).shape[1] if nonempty else 0
    rows = {}
    for s in sorted(fronts):
        F = _as_front(fronts[s])
        hv = None
        if len(F) and m in (2, 3):
            hv = hypervolume(F, ref)
        rows[s] = {
            "front_size": int(len(F)),
            "purity": pur[s],
            "gamma": _safe(gamma_spread, F) if len(F) >= 2 else None,
            "delta": _safe(delta_spread, F) if len(F) >= 2 else None,
            "hypervolume": hv,
            "fun": fun_evals(counters[s], n, s, problem).fun if s in counters else None,
        }
    return {"problem": problem, "n": n, "m": m,
            "reference_point": None if ref is None else ref.tolist(), "solvers": rows}


@dataclass
class MetricsReport:
    problems: list = field(default_factory=list)  # front_metrics dicts
    config: dict = field(default_factory=dict)

    def table(self, metric) -> dict:
        return {p["problem"]: {s: row[metric] for s, row in p["solvers"].items()}
                for p in self.problems}

    def profiles(self, metric) -> dict:
        table = {p: row for p, row in self.table(metric).items()
                 if any(v is not None for v in row.values())}
        return perf_profile(table, METRIC_ORIENTATION[metric])

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "config": self.config,
                "formulas": FORMULAS, "orientation": METRIC_ORIENTATION,
                "problems": self.problems}

    @classmethod
    def from_dict(cls, d):
        return cls(d["problems"], d.get("config", {}))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = ["front_size", "purity", "gamma", "delta", "hypervolume", "fun"]
        writer.writerow(["problem", "solver"] + cols)
        for p in self.problems:
            for s, row in p["solvers"].items():
                writer.writerow([p["problem"], s] + ["" if row[c] is None else repr(row[c])
                                                     for c in cols])
        return buf.getvalue()
