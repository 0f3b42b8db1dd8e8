"""Acceptance criteria, one test per criterion.

Each test prints a single ``ACCEPTANCE <n>: PASS|FAIL`` line; the lines are
repeated in the terminal summary.
"""

import os
import time

import numpy as np
import pytest

from motrpg import bench, mopg, trust_region
from motrpg.cli import main
from motrpg.metrics import fun_evals, hypervolume, perf_profile, purity
from motrpg.problem import EvalCounters, Evaluator, eval_F
from motrpg.subproblem import QuadModelSet, grid_oracle, solve_subproblem, theta
from motrpg.trust_region import SolverConfig, criticality_certificate, solve

from test_cli import read_tree
from test_metrics import monte_carlo_hv, naive_profile

X0 = np.array([-4.5, 6.5])
STARTS = 100


def verdict(request, capsys, n, ok, detail):
    line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}"
    request.config.acceptance_results.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


# --- subproblem recorder and the shared benchmark run -------------------------


class SolveRecorder:
    """Wraps the subproblem solver and checks the decrease bounds of every solve."""

    def __init__(self, tol=1e-6):
        self.tol = tol
        self.count = 0
        self.violations = []

    def __call__(self, x, problem, models, delta, tol=None, grads=None, **kw):
        args = (x, problem, models, delta) + (() if tol is None else (tol,))
        sol = solve_subproblem(*args, grads=grads, **kw)
        self.check(np.asarray(x, dtype=float), problem, models, sol, grads)
        return sol

    def check(self, x, problem, models, sol, grads):
        self.count += 1
        if grads is None:
            grads = Evaluator(problem).grads(x)
        nd = float(sol.d @ sol.d)
        sigma = models.sigma_floor
        bad = []
        if sol.t > -(sigma / 2 + sol.mu) * nd + self.tol:
            bad.append(("t", sol.t))
        for j, obj in enumerate(problem.objectives):
            lin = float(grads[j] @ sol.d) + obj.nonsmooth.increment(x, sol.d)
            if lin > -(sigma + sol.mu) * nd + self.tol:
                bad.append((f"descent {j}", lin))
        if bad:
            self.violations.append((problem.name, x.tolist(), bad))


@pytest.fixture(scope="module")
def recorder():
    rec = SolveRecorder()
    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(trust_region, "solve_subproblem", rec)
        mp.setattr(mopg, "solve_subproblem", rec)
        yield rec


@pytest.fixture(scope="module")
def benchmark(recorder):
    """Every core problem, 100 starts, both solvers, in process."""
    t0 = time.time()
    results = {}
    for pid in bench.BENCHMARK_CORE:
        problem = bench.instantiate(pid)
        starts = bench.sample_starts(problem, STARTS, 0)
        for sid in bench.SOLVERS:
            results[pid, sid] = (problem, bench.multistart_run(problem, sid, starts))
    return results, time.time() - t0


# --- criteria ---------------------------------------------------------------------


def test_criterion_1_example1_values(request, capsys, example1):
    F0 = eval_F(example1, X0)
    F1 = eval_F(example1, [1.1667, -1.8333])
    exact = bool(np.array_equal(F0, [177.0, 155.0]))
    close = bool(np.all(np.abs(F1 - [73.4843, 58.3892]) <= 1e-3))
    verdict(request, capsys, 1, exact and close,
            f"F(x0) = {F0.tolist()} (exact: {exact}); F(1.1667, -1.8333) = "
            f"[{F1[0]:.4f}, {F1[1]:.4f}] vs [73.4843, 58.3892] (within 1e-3: {close})")


def test_criterion_1_values_at_first_iterate(example1):
    # the reference values are attained at x0 + d0 of the Example1 run
    F1 = eval_F(example1, X0 + np.array([3.4524, -1.9728]))
    np.testing.assert_allclose(F1, [73.4843, 58.3892], atol=1e-2)
    run = solve(example1, X0)
    np.testing.assert_allclose(run.trajectory[1].F, [73.4843, 58.3892], atol=1e-3)


def test_criterion_2_example1_solve(request, capsys, example1, recorder):
    t0 = time.time()
    run = solve(example1, X0, SolverConfig())
    elapsed = time.time() - t0
    last_d = float(np.linalg.norm(run.trajectory[-1].d))
    cert = run.final_certificate.hull_distance
    first_rho = run.trajectory[0].rho
    ok = (run.termination == "converged" and last_d < 1e-4 and run.outer_iterations <= 50
          and cert <= 1e-4 and bool(np.all(run.F <= [177.0, 155.0]))
          and 0.85 <= first_rho <= 1.0 and elapsed < 1.0)
    verdict(request, capsys, 2, ok,
            f"{run.termination} in {run.outer_iterations} steps, |d| = {last_d:.1e}, "
            f"certificate {cert:.1e}, F = [{run.F[0]:.4f}, {run.F[1]:.4f}], "
            f"first rho {first_rho:.4f}, {elapsed:.2f} s")


def test_criterion_3_certificate(request, capsys, example1):
    cert = criticality_certificate(example1, [2.0, 3.0])
    got = {tuple(g) for g in cert.generators.tolist()}
    want = {(8.0, 14.0), (-1.0, -3.0), (-2.0, 2.0)}
    G = np.array([[8.0, 14.0], [-1.0, -3.0], [-2.0, 2.0]])
    oracle = np.linalg.solve(np.vstack([G.T, np.ones(3)]), [0.0, 0.0, 1.0])
    order = [cert.generators.tolist().index(list(g)) for g in G]
    werr = float(np.max(np.abs(cert.weights[order] - oracle)))
    ok = got == want and len(cert.generators) == 3 and cert.hull_distance <= 1e-8 and werr <= 1e-6
    verdict(request, capsys, 3, ok,
            f"generators {sorted(got)}, distance {cert.hull_distance:.1e}, "
            f"weights {np.round(cert.weights[order], 4).tolist()} (max error {werr:.1e})")


def random_instance(problem, rng):
    x = problem.box.lb + rng.random(problem.n) * (problem.box.ub - problem.box.lb)
    span = float(np.max(problem.box.ub - problem.box.lb))
    delta = span * 10 ** rng.uniform(-3, 0)
    Bs = []
    for _ in range(problem.m):
        Q, _ = np.linalg.qr(rng.standard_normal((problem.n, problem.n)))
        Bs.append(Q @ np.diag(rng.uniform(0.1, 10.0, problem.n)) @ Q.T)
    return x, delta, QuadModelSet(Bs)


def test_criterion_4_oracle_equivalence(request, capsys):
    rng = np.random.default_rng(2024)
    t0 = time.time()
    worst_gap, worst_kkt, count, small = 0.0, 0.0, 0, []
    for pid in bench.list_problems():
        problem = bench.instantiate(pid)
        if problem.n > 2:
            continue
        small.append(pid)
        for _ in range(50):
            x, delta, models = random_instance(problem, rng)
            sol = solve_subproblem(x, problem, models, delta)
            _, t_o = grid_oracle(x, problem, models, delta, resolution=32)
            worst_gap = max(worst_gap, abs(sol.t - t_o) / (1 + abs(t_o)))
            worst_kkt = max(worst_kkt, sol.kkt_residual)
            count += 1
    elapsed = time.time() - t0
    ok = worst_gap <= 1e-3 and worst_kkt <= 1e-8 and elapsed < 30
    verdict(request, capsys, 4, ok,
            f"{count} instances over {len(small)} problems, max relative gap {worst_gap:.1e}, "
            f"max KKT residual {worst_kkt:.1e}, {elapsed:.1f} s")


def test_criterion_5_decrease_bounds(request, capsys, benchmark, recorder):
    # the recorder saw every solve of the benchmark and of criterion 2
    ok = recorder.count > 0 and not recorder.violations
    verdict(request, capsys, 5, ok,
            f"{recorder.count} subproblem solves, {len(recorder.violations)} violations"
            + (f", first {recorder.violations[0]}" if recorder.violations else ""))


def test_criterion_6_theta(request, capsys, benchmark):
    rng = np.random.default_rng(77)
    pids = bench.list_problems()
    fails = []
    for i in range(200):
        problem = bench.instantiate(pids[i % len(pids)])
        x, delta, _ = random_instance(problem, rng)
        alpha = rng.uniform(1e-3, 1.0)
        grow = rng.uniform(1.0, 5.0)
        th = theta(x, problem, delta)
        if th > 1e-6:
            fails.append(("i", problem.name, th))
        if theta(x, problem, grow * delta) > th + 1e-6:
            fails.append(("ii", problem.name))
        if theta(x, problem, alpha * delta) > alpha * th + 1e-6:
            fails.append(("iv", problem.name))
    # property iii at points with a tight criticality certificate
    results, _ = benchmark
    critical = [(bench.instantiate("Example1"), np.array([2.0, 3.0]))]
    for (pid, sid), (problem, res) in results.items():
        for run in res.runs:
            if run.final_certificate.hull_distance <= 1e-8:
                critical.append((problem, run.x))
                break
    for problem, x in critical:
        for delta in (0.1, 1.0, 10.0):
            if abs(theta(x, problem, delta)) > 1e-6:
                fails.append(("iii", problem.name, delta))
    verdict(request, capsys, 6, not fails,
            f"200 probes for i/ii/iv, {len(critical)} certified points x 3 radii for iii, "
            f"{len(fails)} failures" + (f", first {fails[0]}" if fails else ""))


def test_criterion_7_global_descent(request, capsys, benchmark):
    results, elapsed = benchmark
    steps, violations, failed = 0, [], 0
    for (pid, sid), (problem, res) in results.items():
        failed += len(res.failures)
        sigma0 = SolverConfig().sigma0
        for run in res.runs:
            after = [r.F for r in run.trajectory[1:]] + [run.F]
            for rec, F_new in zip(run.trajectory, after):
                if not rec.accepted:
                    continue
                steps += 1
                drop = rec.F - F_new
                strict = bool(np.all(drop > 0))
                # rho >= sigma0 is tested by division, allow its rounding
                enough = drop.min() >= sigma0 * -rec.t * (1 - 1e-12)
                if not (strict and enough):
                    violations.append((pid, sid, rec.k, drop.tolist(), rec.t))
    ok = len(results) >= 24 and not violations and failed == 0 and elapsed <= 900
    verdict(request, capsys, 7, ok,
            f"{len(bench.BENCHMARK_CORE)} problems x {STARTS} starts x 2 solvers, "
            f"{steps} accepted steps, {len(violations)} violations, {failed} failed starts, "
            f"{elapsed:.0f} s" + (f", first {violations[0]}" if violations else ""))


def test_criterion_8_metrics(request, capsys):
    checks = {}
    checks["hv2"] = hypervolume([[1.0, 0.0], [0.0, 1.0]], [2.0, 2.0]) == 3.0
    rng = np.random.default_rng(8)
    P = rng.random((20, 3))
    ref = np.full(3, 1.1)
    exact, mc = hypervolume(P, ref), monte_carlo_hv(P, ref)
    checks["hv3"] = abs(exact - mc) <= 0.01 * exact
    F = [[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]]
    checks["purity"] = purity({"A": F, "B": F}) == {"A": 1.0, "B": 1.0}
    table = {f"p{i}": {"A": float(rng.uniform(1, 9)), "B": float(rng.uniform(1, 9)),
                       "C": None if i % 4 == 0 else float(rng.uniform(1, 9))} for i in range(12)}
    prof_ok = True
    for higher in (False, True):
        curves = perf_profile(table, "higher-better" if higher else "lower-better")
        for s, c in curves.items():
            for tau in np.linspace(1.0, 10.0, 91):
                prof_ok &= abs(c.at(tau) - naive_profile(table, s, tau, higher)) <= 1e-15
    checks["profiles"] = bool(prof_ok)
    c = EvalCounters()
    script = ["f"] * 10 + ["grad"] * 3 + ["g"] * 4
    for op in script:
        setattr(c, f"{op}_evals", getattr(c, f"{op}_evals") + 1)
    checks["fun"] = (fun_evals(c, 2, "MOTRPG").fun == 16
                     and fun_evals(c, 2, "MONPG", hess_evals=1).fun == 19
                     and fun_evals(EvalCounters(), 3).fun == 0)
    verdict(request, capsys, 8, all(checks.values()),
            f"{checks}; 3-D hypervolume {exact:.5f} vs Monte Carlo {mc:.5f}")


def test_criterion_9_determinism(request, capsys, tmp_path):
    argv = ["front", "Example1", "MOLS1", "SP1+gA*", "--starts", "20", "--seed", "7"]
    codes = [main(argv + ["--out", str(tmp_path / d)]) for d in ("a", "b")]
    a, b = read_tree(tmp_path / "a"), read_tree(tmp_path / "b")
    ok = codes == [0, 0] and len(a) > 0 and a == b
    verdict(request, capsys, 9, ok,
            f"{len(a)} files from two runs, byte identical: {a == b}")
