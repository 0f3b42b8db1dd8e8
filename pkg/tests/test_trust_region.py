import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motrpg import bench
from motrpg.problem import Evaluator, eval_F
from motrpg.subproblem import SIGMA_FLOOR
from motrpg.trust_region import (
    SolverConfig,
    certificate_tolerance,
    criticality_certificate,
    damped_bfgs_update,
    rho,
    solve,
    update_radius,
)

from helpers import half_sq

X0 = [-4.5, 6.5]


def cert_bound(problem, x, eps=1e-5):
    grads = Evaluator(problem).grads(x)
    return 10 * eps * (1 + max(np.linalg.norm(g) for g in grads))


# --- configuration ------------------------------------------------------------


@pytest.mark.parametrize("kwargs", [
    {"sigma0": 0.6}, {"sigma1": 1.0}, {"sigma3": 1.0}, {"sigma2": 0.005},
    {"delta0": 0.0}, {"delta_min": -1.0}, {"eps": 0.0}, {"radius_rule": "cubic"},
    {"initial_B": 1e-9}, {"max_outer_iters": -1}])
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_initial_radii():
    assert SolverConfig().initial_radii(15.8114) == pytest.approx((3.97635, 3.97635), abs=1e-5)
    assert SolverConfig(radius_rule="linear").initial_radii(15.8114) == (15.8114, 15.8114)
    # small gradients: the floor of delta_min is 1
    assert SolverConfig().initial_radii(0.25) == (1.0, 1.0)
    assert SolverConfig(delta0=7.0, delta_min=2.0).initial_radii(100.0) == (7.0, 2.0)


# --- building blocks ----------------------------------------------------------


def test_rho_example(example1):
    d = np.array([3.4524, -1.9728])
    F1 = eval_F(example1, np.array(X0) + d)
    assert rho([177.0, 155.0], F1, -104.5165) == pytest.approx(0.9244, abs=1e-3)


def test_rho_cases():
    assert rho([2.0, 2.0], [1.0, 1.0], -1.0) == 1.0
    assert rho([2.0, 2.0], [1.0, 2.5], -1.0) < 0
    with pytest.raises(ValueError):
        rho([1.0], [0.0], 0.0)


def test_update_radius_cases():
    cfg = SolverConfig(delta_min=15.8114)
    nxt, action = update_radius(15.8114, 0.9244, cfg)
    assert action == "expand" and nxt == pytest.approx(23.7171, abs=1e-4)
    assert update_radius(10.0, 0.2, cfg) == (10.0, "keep")
    assert update_radius(10.0, 0.001, cfg) == (5.0, "shrink")
    # expansion never goes below delta_min
    assert update_radius(1.0, 0.9, cfg) == (15.8114, "expand")
    with pytest.raises(ValueError):
        update_radius(0.0, 0.5, cfg)


def test_bfgs_secant_consistent_is_noop():
    B = np.array([[2.0, 0.5], [0.5, 1.0]])
    s = np.array([1.0, -1.0])
    np.testing.assert_allclose(damped_bfgs_update(B, s, B @ s), B, atol=1e-12)


def test_bfgs_damping():
    # s'y = -1 < 0.2 s'Bs = 0.2, so theta = 0.8 / 2 = 0.4 and y becomes (0.2, 0)
    B = damped_bfgs_update(np.eye(2), [1.0, 0.0], [-1.0, 0.0])
    np.testing.assert_allclose(B, np.diag([0.2, 1.0]), atol=1e-12)


def test_bfgs_secant_after_damping():
    B = damped_bfgs_update(np.eye(2), [1.0, 0.0], [3.0, 1.0])
    np.testing.assert_allclose(B @ [1.0, 0.0], [3.0, 1.0], atol=1e-12)


def test_bfgs_clamps():
    B = damped_bfgs_update(np.eye(2), [1.0, 0.0], [1e8, 0.0])
    np.testing.assert_allclose(np.linalg.eigvalsh(B), [1.0, 1e6], rtol=1e-9)
    with pytest.raises(ValueError):
        damped_bfgs_update(np.eye(2), [0.0, 0.0], [1.0, 0.0])


@given(st.integers(0, 10_000))
def test_bfgs_keeps_bounds(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((3, 3))
    B = A @ A.T + 0.1 * np.eye(3)
    s = rng.standard_normal(3)
    y = rng.standard_normal(3) * 10 ** rng.uniform(-3, 3)
    ev = np.linalg.eigvalsh(damped_bfgs_update(B, s, y))
    assert ev.min() >= SIGMA_FLOOR * (1 - 1e-9) and ev.max() <= 1e6 * (1 + 1e-9)


def test_certificate_at_critical_point(example1):
    cert = criticality_certificate(example1, [2.0, 3.0])
    assert cert.hull_distance <= 1e-12
    assert set(cert.owner.tolist()) == {0, 1}
    assert abs(cert.weights.sum() - 1) <= 1e-12


def test_certificate_away_from_critical(example1):
    assert criticality_certificate(example1, X0).hull_distance > 1.0


def test_certificate_tolerance_scale(example1):
    grads = Evaluator(example1).grads([2.0, 3.0])
    tau = certificate_tolerance(example1, np.array([2.0, 3.0]), grads, 0.0, 1e-5)
    assert 1e-4 < tau < 1e-2


# --- runs ---------------------------------------------------------------------


def test_example1_run(example1):
    run = solve(example1, X0)
    assert run.termination == "converged"
    first = run.trajectory[0]
    assert first.delta_used == pytest.approx(3.9764, abs=1e-4)
    np.testing.assert_allclose(first.d, [3.4524, -1.9728], atol=1e-4)
    assert first.t == pytest.approx(-104.5165, abs=1e-4)
    assert first.rho == pytest.approx(0.9244, abs=1e-4)
    assert first.accepted
    assert run.final_certificate.hull_distance <= cert_bound(example1, run.x)
    np.testing.assert_allclose(run.x, [2.00768, 3.00152], atol=1e-4)


def test_linear_radius_rule_first_ratio(example1):
    run = solve(example1, X0, SolverConfig(radius_rule="linear"))
    assert run.trajectory[0].delta_used == pytest.approx(15.8114, abs=1e-4)
    assert run.trajectory[0].rho == pytest.approx(0.6613, abs=1e-4)
    assert run.termination == "converged"


def test_start_at_critical_point(example1):
    run = solve(example1, [2.0, 3.0])
    assert run.termination == "converged" and run.outer_iterations == 0
    assert len(run.trajectory) == 1 and math.isnan(run.trajectory[0].rho)
    np.testing.assert_array_equal(run.x, [2.0, 3.0])


def test_single_objective_quadratic():
    # the first step ends on the ball with a zero multiplier, so the
    # interior-point step is accurate to about sqrt(gap); stopping is at eps
    run = solve(half_sq(), [1.0, 0.0])
    assert run.termination == "converged" and run.outer_iterations <= 2
    assert np.linalg.norm(run.x) <= run.config["eps"]


def test_max_iters(example1):
    run = solve(example1, X0, SolverConfig(max_outer_iters=1))
    assert run.termination == "max_iters" and run.outer_iterations == 1


def test_inner_loop_exhausted(example1):
    cfg = SolverConfig(delta0=100.0, initial_B=SIGMA_FLOOR, max_inner_shrinks=2)
    run = solve(example1, X0, cfg)
    assert run.termination == "inner_loop_exhausted"
    assert [r.inner_shrinks for r in run.trajectory] == [0, 1, 2]
    assert [r.delta_used for r in run.trajectory] == [100.0, 50.0, 25.0]
    np.testing.assert_array_equal(run.x, X0)


def test_bad_start(example1):
    with pytest.raises(ValueError):
        solve(example1, [np.nan, 0.0])
    with pytest.raises(ValueError):
        solve(example1, [0.0])


def test_serialization(example1):
    run = solve(example1, X0)
    data = json.loads(json.dumps(run.to_dict(), allow_nan=False))
    assert data["termination"] == "converged" and data["solver"] == "MOTRPG"
    assert data["config"]["delta0"] == pytest.approx(3.97635, abs=1e-5)
    assert data["trajectory"][-1]["rho"] is None
    assert data["counters"] == run.counters.as_dict()
    lines = run.to_csv().strip().splitlines()
    assert lines[0] == "k,F1,F2,delta,norm_d,rho,accepted"
    assert len(lines) == len(run.trajectory) + 1


# --- invariants over random starts -------------------------------------------

CORE = list(bench.BENCHMARK_CORE)


def check_invariants(problem, run, cfg):
    resolved = SolverConfig(**run.config)
    accepted = run.accepted
    F0 = eval_F(problem, run.x0)
    # every accepted step decreases every objective by at least sigma0 * (-t)
    for rec, nxt in zip(run.trajectory, run.trajectory[1:]):
        if rec.accepted:
            drop = rec.F - nxt.F
            assert np.all(drop >= cfg.sigma0 * -rec.t - 1e-9 * (1 + np.abs(rec.F)))
    total = sum(cfg.sigma0 * -r.t for r in accepted)
    assert total <= np.min(F0 - run.F) + 1e-8 * (1 + np.abs(F0).max())
    # radius bookkeeping between consecutive records
    for rec, nxt in zip(run.trajectory, run.trajectory[1:]):
        want, action = update_radius(rec.delta_used, rec.rho, resolved)
        assert nxt.delta_used == pytest.approx(want, rel=1e-15)
        assert rec.accepted == (action != "shrink")
        assert nxt.inner_shrinks == (0 if rec.accepted else rec.inner_shrinks + 1)
        assert nxt.k == rec.k + int(rec.accepted)
        assert rec.t < 0 and np.linalg.norm(rec.d) <= rec.delta_used * (1 + 1e-9)


@settings(max_examples=25)
@given(st.sampled_from(CORE), st.integers(0, 2**32 - 1))
def test_run_invariants(pid, seed):
    p = bench.instantiate(pid)
    x0 = bench.sample_starts(p, 1, seed)[0]
    cfg = SolverConfig()
    run = solve(p, x0, cfg)
    assert run.termination == "converged"
    check_invariants(p, run, cfg)
    assert run.final_certificate.hull_distance <= cert_bound(p, run.x)
