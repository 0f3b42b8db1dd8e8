"""Command-line interface.

Subcommands: ``solve``, ``front``, ``compare``, ``profile`` and
``list-problems``. All outputs are JSON or CSV files under ``--out``
(default ``$MOTRPG_OUT`` or ``./motrpg_out``) and contain no timestamps, so
a fixed seed reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bench
from .metrics import METRIC_ORIENTATION, MetricsReport, front_metrics, profiles_to_csv
from .mopg import MOPGConfig
from .problem import EvalCounters
from .subproblem import SubproblemError
from .trust_region import SolverConfig

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_MAX_ITERS, EXIT_SOLVER = 0, 1, 2, 3
TERMINATION_EXIT = {"converged": EXIT_OK, "max_iters": EXIT_MAX_ITERS,
                    "inner_loop_exhausted": EXIT_SOLVER}


@dataclass
class ExperimentConfig:
    problems: list
    solvers: list = field(default_factory=lambda: ["MOTRPG", "MOPG"])
    starts: int = 100
    seed: int = 0
    motrpg: dict = field(default_factory=dict)
    mopg: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.problems:
            raise ValueError("need at least one problem")
        if not self.solvers:
            raise ValueError("need at least one solver")
        for s in self.solvers:
            if s not in bench.SOLVERS:
                raise ValueError(f"unknown solver {s!r}")
        if self.starts < 1:
            raise ValueError("need at least one start")
        # materialize every default
        self.motrpg = SolverConfig(**self.motrpg).to_dict()
        self.mopg = MOPGConfig(**self.mopg).to_dict()

    def solver_config(self, solver):
        return SolverConfig(**self.motrpg) if solver == "MOTRPG" else MOPGConfig(**self.mopg)

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, **asdict(self)}


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name.replace("+", "_").replace("*", "s"))


def _overrides(args):
    tr, pg = {}, {}
    for k in ("sigma0", "sigma1", "sigma2", "sigma3"):
        v = getattr(args, k, None)
        if v is not None:
            tr[k] = v
    if args.eps is not None:
        tr["eps"] = pg["eps"] = args.eps
    if args.max_iters is not None:
        tr["max_outer_iters"] = pg["max_iters"] = args.max_iters
    return tr, pg


def _out_dir(args):
    out = args.out or os.environ.get("MOTRPG_OUT") or "motrpg_out"
    os.makedirs(out, exist_ok=True)
    return out


def _fail(msg):
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_USAGE


# --------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    try:
        problem = bench.instantiate(args.problem)
    except KeyError as exc:
        return _fail(exc.args[0])
    if args.x0 is not None:
        try:
            x0 = np.array([float(v) for v in args.x0.split(",")])
        except ValueError:
            return _fail(f"cannot parse --x0 {args.x0!r}")
        if x0.size != problem.n or not np.all(np.isfinite(x0)):
            return _fail(f"--x0 has {x0.size} entries, problem has n={problem.n}")
    else:
        x0 = bench.sample_starts(problem, 1, args.seed)[0]
    tr, pg = _overrides(args)
    try:
        cfg = SolverConfig(**tr) if args.solver == "MOTRPG" else MOPGConfig(**pg)
    except ValueError as exc:
        return _fail(str(exc))
    out = _out_dir(args)
    stem = os.path.join(out, f"{safe_name(problem.name)}_{args.solver}")
    try:
        run = bench.SOLVERS[args.solver][0](problem, x0, cfg)
    except (SubproblemError, ArithmeticError, ValueError) as exc:
        _dump(stem + "_run.json", {"schema_version": SCHEMA_VERSION, "problem": problem.name,
                                   "solver": args.solver, "x0": x0.tolist(),
                                   "seed": args.seed, "termination": "solver_error",
                                   "message": f"{type(exc).__name__}: {exc}"})
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    data = run.to_dict()
    data["seed"] = args.seed
    _dump(stem + "_run.json", data)
    _write(stem + "_trajectory.csv", run.to_csv())
    cert = run.final_certificate.hull_distance
    print(f"{problem.name} {args.solver}: {run.termination} after {run.outer_iterations} "
          f"steps, x = {np.array2string(run.x, precision=6)}, F = "
          f"{np.array2string(run.F, precision=6)}, certificate {cert:.3e}")
    return TERMINATION_EXIT[run.termination]


def _experiment(args):
    tr, pg = _overrides(args)
    return ExperimentConfig(list(args.problems), list(args.solver or ["MOTRPG", "MOPG"]),
                            args.starts, args.seed, tr, pg)


def run_fronts(cfg: ExperimentConfig, out, jobs=1):
    """Multi-start every (problem, solver) pair; returns per-problem results."""
    results = {}
    for pid in cfg.problems:
        problem = bench.instantiate(pid)
        starts = bench.sample_starts(problem, cfg.starts, cfg.seed)
        per = {}
        for sid in cfg.solvers:
            per[sid] = bench.multistart_run(problem, sid, starts, cfg.solver_config(sid), jobs)
        results[pid] = (problem, per)
        _write_front(cfg, out, problem, per)
    return results


def _counter_total(runs):
    tot = EvalCounters()
    for r in runs:
        tot.f_evals += r.counters.f_evals
        tot.grad_evals += r.counters.grad_evals
        tot.g_evals += r.counters.g_evals
    return tot


def _write_front(cfg, out, problem, per):
    pdir = os.path.join(out, safe_name(problem.name))
    os.makedirs(pdir, exist_ok=True)
    summary = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(),
               "problem": problem.name, "n": problem.n, "m": problem.m, "solvers": {}}
    merged = None
    for sid, res in per.items():
        arch = res.archive.to_dict()
        arch["config"] = cfg.to_dict()
        arch["problem"] = problem.name
        _dump(os.path.join(pdir, f"{sid}_archive.json"), arch)
        _write(os.path.join(pdir, f"{sid}_archive.csv"), res.archive.to_csv())
        terms = {}
        for r in res.runs:
            terms[r.termination] = terms.get(r.termination, 0) + 1
        summary["solvers"][sid] = {
            "archive_size": len(res.archive),
            "terminations": dict(sorted(terms.items())),
            "failures": [f.to_dict() for f in res.failures],
            "counters": _counter_total(res.runs).as_dict(),
            "max_certificate": max((r.final_certificate.hull_distance for r in res.runs),
                                   default=None),
        }
        merged = res.archive if merged is None else merged.merge(res.archive)
    ref = merged.to_dict()
    ref["config"] = cfg.to_dict()
    ref["problem"] = problem.name
    _dump(os.path.join(pdir, "reference_front.json"), ref)
    _dump(os.path.join(pdir, "front_summary.json"), summary)


def cmd_front(args) -> int:
    try:
        cfg = _experiment(args)
        for pid in cfg.problems:
            bench.instantiate(pid)
    except (KeyError, ValueError) as exc:
        return _fail(exc.args[0])
    out = _out_dir(args)
    results = run_fronts(cfg, out, args.jobs)
    for pid, (problem, per) in results.items():
        sizes = ", ".join(f"{s}: {len(r.archive)} points, {len(r.failures)} failed"
                          for s, r in per.items())
        print(f"{pid}: {sizes}")
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        cfg = _experiment(args)
        for pid in cfg.problems:
            bench.instantiate(pid)
    except (KeyError, ValueError) as exc:
        return _fail(exc.args[0])
    out = _out_dir(args)
    results = run_fronts(cfg, out, args.jobs)
    report = MetricsReport(config=cfg.to_dict())
    for pid, (problem, per) in results.items():
        fronts = {s: r.archive.F.reshape(len(r.archive), problem.m) for s, r in per.items()}
        counters = {s: _counter_total(r.runs) for s, r in per.items()}
        report.problems.append(front_metrics(pid, problem.n, fronts, counters))
    _dump(os.path.join(out, "metrics_report.json"), report.to_dict())
    _write(os.path.join(out, "metrics_report.csv"), report.to_csv())
    print(report.to_csv(), end="")
    return EXIT_OK


def cmd_profile(args) -> int:
    report = MetricsReport()
    for path in args.reports:
        try:
            with open(path) as fh:
                part = MetricsReport.from_dict(json.load(fh))
        except (OSError, ValueError, KeyError) as exc:
            return _fail(f"cannot read report {path}: {exc}")
        report.problems.extend(part.problems)
        report.config.setdefault("sources", []).append(part.config)
    out = _out_dir(args)
    summary = {"schema_version": SCHEMA_VERSION, "config": report.config, "profiles": {}}
    for metric in METRIC_ORIENTATION:
        try:
            curves = report.profiles(metric)
        except ValueError as exc:
            print(f"skipping {metric}: {exc}", file=sys.stderr)
            continue
        _write(os.path.join(out, f"profile_{metric}.csv"), profiles_to_csv(curves))
        summary["profiles"][metric] = {s: c.to_dict() for s, c in sorted(curves.items())}
    _dump(os.path.join(out, "profiles.json"), summary)
    print(f"wrote profiles for {len(summary['profiles'])} metrics to {out}")
    return EXIT_OK


def cmd_list(args) -> int:
    for pid in bench.list_problems():
        spec = bench.CATALOG.get(pid)
        if spec is None:
            print(f"{pid:18s} fixture")
        else:
            print(f"{pid:18s} m={spec.m} n={spec.n:<3d} f={spec.smooth:9s} g={spec.nonsmooth:4s} "
                  f"lb={list(spec.lb)[:3]} ub={list(spec.ub)[:3]}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _common(p, multi_solver=False):
    if multi_solver:
        p.add_argument("--solver", action="append", choices=sorted(bench.SOLVERS),
                       help="solver to run (repeatable, default both)")
    else:
        p.add_argument("--solver", default="MOTRPG", choices=sorted(bench.SOLVERS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (default $MOTRPG_OUT or ./motrpg_out)")
    for k in ("sigma0", "sigma1", "sigma2", "sigma3"):
        p.add_argument(f"--{k}", type=float)
    p.add_argument("--eps", type=float, help="stopping threshold on the step norm")
    p.add_argument("--max-iters", type=int, dest="max_iters")


def build_parser():
    parser = argparse.ArgumentParser(prog="motrpg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="single run with trajectory output")
    p.add_argument("problem")
    p.add_argument("--x0", help="comma separated start point (default: sampled from the box)")
    _common(p)
    p.set_defaults(func=cmd_solve)

    for name, func, help_ in (("front", cmd_front, "multi-start Pareto fronts"),
                              ("compare", cmd_compare, "fronts plus metrics report")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("problems", nargs="+")
        p.add_argument("--starts", type=int, default=100)
        p.add_argument("--jobs", type=int, default=1)
        _common(p, multi_solver=True)
        p.set_defaults(func=func)

    p = sub.add_parser("profile", help="performance profiles from metrics reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("list-problems", help="print the problem catalog")
    p.set_defaults(func=cmd_list)
    return parser


def _glue_negative_values(argv):
    # let "--x0 -4.5,6.5" through: argparse would read the value as an option
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--x0":
            val = next(it, None)
            out.append(tok if val is None else f"--x0={val}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(_glue_negative_values(argv))
    except SystemExit as exc:
        # argparse uses 2 for usage errors, which here means max_iters
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
