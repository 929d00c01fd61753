import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halkit.errors import DomainError, NumericalError, ShapeError
from halkit.solver import (FunctionOracle, QuadraticOracle, SolveReport, fw_gap, minimize_l1ball,
                           project_l1)


def ball_samples(rng, M, dim, count):
    """Points spread over the l1 ball, interior and boundary."""
    v = rng.laplace(size=(count, dim))
    v /= np.abs(v).sum(axis=1, keepdims=True)
    return v * M * rng.uniform(size=(count, 1)) ** (1.0 / dim)


def hazard_toy(beta):
    # one observation (t=0.5, event): -(b0 + b1) + 0.5 exp(b0)
    v = -(beta[0] + beta[1]) + 0.5 * np.exp(beta[0])
    return v, np.array([-1.0 + 0.5 * np.exp(beta[0]), -1.0])


def random_quadratic(rng, dim, rank=None):
    A = rng.normal(size=(rank or dim + 3, dim))
    c = rng.normal(size=dim)
    return QuadraticOracle(A.T @ A, A.T @ A @ c, 0.0)


class TestProjection:
    def test_inside_unchanged(self):
        v = np.array([0.3, -0.2])
        assert np.array_equal(project_l1(v, 1.0), v)

    def test_boundary_tie_unchanged(self):
        v = np.array([0.75, -0.25])
        assert np.array_equal(project_l1(v, 1.0), v)

    def test_single_coordinate(self):
        assert np.allclose(project_l1([3.0, 0.0], 1.0), [1.0, 0.0])

    def test_threshold_example_against_grid(self):
        out = project_l1([2.0, 1.0], 1.0)
        assert np.allclose(out, [1.0, 0.0])
        # dense search over the boundary |a| + |b| = 1
        s = np.linspace(-1, 1, 40001)
        cand = np.concatenate([np.column_stack([s, 1 - np.abs(s)]), np.column_stack([s, np.abs(s) - 1])])
        best = cand[np.argmin(((cand - [2.0, 1.0]) ** 2).sum(axis=1))]
        assert np.allclose(out, best, atol=1e-4)

    def test_negative_radius(self):
        with pytest.raises(DomainError):
            project_l1([1.0], -0.1)

    def test_zero_radius(self):
        assert np.array_equal(project_l1([1.0, -2.0], 0.0), [0.0, 0.0])

    def test_optimality_against_samples(self, rng):
        for _ in range(10):
            dim = int(rng.integers(2, 6))
            v = rng.normal(size=dim) * 3
            M = float(rng.uniform(0.1, 2.0))
            p = project_l1(v, M)
            assert np.abs(p).sum() <= M
            pts = ball_samples(rng, M, dim, 10_000)
            assert np.linalg.norm(p - v) <= np.linalg.norm(pts - v, axis=1).min() + 1e-12

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.floats(0, 100))
    def test_feasible_and_kkt(self, v, M):
        v = np.array(v)
        p = project_l1(v, M)
        assert np.abs(p).sum() <= M
        assert np.all(np.sign(p) * np.sign(v) >= 0)
        assert np.all(np.abs(p) <= np.abs(v) + 1e-12)


class TestGap:
    def test_zero_gradient(self):
        assert fw_gap(np.zeros(3), np.array([0.1, 0, 0]), 1.0) == 0.0

    def test_enumerated_vertices(self):
        g, b, M = np.array([1.0, -2.0]), np.zeros(2), 1.0
        verts = [s * M * e for e in np.eye(2) for s in (1, -1)]
        assert fw_gap(g, b, M) == max(g @ (b - v) for v in verts) == 2.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            fw_gap(np.zeros(2), np.zeros(3), 1.0)


class TestMinimize:
    def test_interior_quadratic(self):
        c = np.array([0.2, -0.3, 0.1])
        oracle = FunctionOracle(lambda b: (float((b - c) @ (b - c)), 2 * (b - c)), 3)
        r = minimize_l1ball(oracle, 1.0)
        assert r.converged and np.allclose(r.beta_hat, c, atol=1e-6)
        assert r.fw_gap <= 1e-8 * (1 + abs(r.objective))

    def test_toy_hazard_against_grid(self):
        r = minimize_l1ball(FunctionOracle(hazard_toy, 2), 1.0)
        s = np.linspace(-1, 1, 2001)
        grid = np.array([(a, b) for a in s for b in s if abs(a) + abs(b) <= 1 + 1e-12])
        vals = -(grid[:, 0] + grid[:, 1]) + 0.5 * np.exp(grid[:, 0])
        best = grid[np.argmin(vals)]
        assert np.allclose(best, [0, 1], atol=1e-3)
        assert np.allclose(r.beta_hat, [0, 1], atol=1e-6)
        assert r.converged

    def test_zero_budget(self):
        r = minimize_l1ball(FunctionOracle(hazard_toy, 2), 0.0)
        assert np.array_equal(r.beta_hat, [0, 0]) and r.converged

    @pytest.mark.parametrize("rule", ["apg", "fw"])
    def test_step_rules_agree(self, rng, rule):
        q = random_quadratic(rng, 6)
        ref = minimize_l1ball(q, 1.0)
        r = minimize_l1ball(q, 1.0, step_rule=rule, max_iter=200_000, tol=1e-6)
        assert r.objective == pytest.approx(ref.objective, abs=1e-5)

    def test_working_set_matches_full(self, rng):
        q = random_quadratic(rng, 60, rank=30)
        a = minimize_l1ball(q, 1.5, working_set=True)
        b = minimize_l1ball(q, 1.5, working_set=False)
        assert a.converged and b.converged
        assert a.objective == pytest.approx(b.objective, abs=1e-9)

    def test_monotone_in_budget(self, rng):
        for _ in range(5):
            q = random_quadratic(rng, 8)
            o = [minimize_l1ball(q, M).objective for M in (0.25, 0.5, 1.0, 2.0)]
            assert all(b <= a + 1e-8 for a, b in zip(o, o[1:]))

    def test_objective_not_above_init(self, rng):
        q = random_quadratic(rng, 5)
        init = project_l1(rng.normal(size=5), 1.0)
        r = minimize_l1ball(q, 1.0, init, max_iter=3)
        assert r.objective <= q(init)[0] + 1e-12

    def test_infeasible_init_projected(self, rng):
        q = random_quadratic(rng, 4)
        r = minimize_l1ball(q, 0.5, np.full(4, 3.0))
        assert np.abs(r.beta_hat).sum() <= 0.5

    def test_bad_init_shape(self):
        with pytest.raises(ShapeError):
            minimize_l1ball(FunctionOracle(hazard_toy, 2), 1.0, np.zeros(3))

    def test_non_finite_objective_names_iteration(self):
        oracle = FunctionOracle(lambda b: (float("nan"), np.zeros(2)), 2)
        with pytest.raises(NumericalError, match="iteration 0"):
            minimize_l1ball(oracle, 1.0)

    def test_unknown_step_rule(self):
        with pytest.raises(DomainError):
            minimize_l1ball(FunctionOracle(hazard_toy, 2), 1.0, step_rule="cd")

    def test_budget_exhaustion_reports_unconverged(self, rng):
        r = minimize_l1ball(random_quadratic(rng, 10), 1.0, max_iter=1, step_rule="fw")
        assert not r.converged

    def test_report_round_trip(self, rng):
        r = minimize_l1ball(random_quadratic(rng, 3), 1.0)
        back = SolveReport.from_dict(r.to_dict())
        assert np.array_equal(back.beta_hat, r.beta_hat) and back.fw_gap == r.fw_gap

    def test_exactly_feasible(self, rng):
        for _ in range(10):
            r = minimize_l1ball(random_quadratic(rng, 7), float(rng.uniform(0.1, 3)))
            assert np.abs(r.beta_hat).sum() <= r.M
            assert r.fw_gap >= -1e-12


def test_convexity_probe_on_quadratic(rng):
    q = random_quadratic(rng, 5)
    for a, b in itertools.islice(zip(ball_samples(rng, 2, 5, 20), ball_samples(rng, 2, 5, 20)), 20):
        assert q(0.5 * (a + b))[0] <= 0.5 * (q(a)[0] + q(b)[0]) + 1e-10
