import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import privopt as po
from privopt.objectives import (ConvexityError, DimensionMismatchError,
                                estimate_constants, evaluate, gradient, project,
                                solve_centralized)

from conftest import quartic_objectives


def finite_difference(obj, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for d in range(x.size):
        e = np.zeros_like(x)
        e[d] = h
        out[d] = (obj.value(x + e) - obj.value(x - e)) / (2 * h)
    return out


class TestEvaluate:
    def test_square_at_two(self):
        assert evaluate(po.PolynomialObjective([0, 0, 1]), [2.0]) == 4.0

    def test_mixed_quartic_at_zero(self):
        assert evaluate(po.PolynomialObjective([0, 0, 1, 0, 1]), [0.0]) == 0.0

    def test_scaled_sum_at_one(self):
        # 2.5(x^2 + x^4) evaluated at 1
        assert evaluate(po.PolynomialObjective([0, 0, 2.5, 0, 2.5]), [1.0]) == 5.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            evaluate(po.PolynomialObjective([[0, 1], [0, 1]]), [1.0])


class TestGradient:
    @pytest.mark.parametrize("coeffs,x,expected", [
        ([0, 0, 0, 0, 1], 1.0, 4.0),      # quartic at 1
        ([0, 0, 1], 0.0, 0.0),            # stationary point
        ([0, 0, 1, 0, 0.5], 2.0, 20.0),   # 2x + 2x^3 at 2
    ])
    def test_examples_against_finite_differences(self, coeffs, x, expected):
        obj = po.PolynomialObjective(coeffs)
        g = gradient(obj, [x])[0]
        assert g == pytest.approx(expected, rel=1e-12)
        assert g == pytest.approx(finite_difference(obj, [x])[0], rel=1e-6)

    def test_quadratic_and_logistic_match_finite_differences(self):
        rng = np.random.default_rng(5)
        quad = po.QuadraticObjective([[2.0, 0.3], [0.3, 1.0]], [0.5, -1.0], 2.0)
        logi = po.LogisticObjective(seed=4, dim=2)
        for obj in (quad, logi):
            for _ in range(20):
                x = rng.uniform(-2, 2, size=2)
                np.testing.assert_allclose(obj.gradient(x), finite_difference(obj, x),
                                           rtol=1e-5, atol=1e-7)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_random_interior_points(self, seed):
        rng = np.random.default_rng(seed)
        obj = quartic_objectives()[int(rng.integers(0, 5))]
        x = rng.uniform(-29, 29, size=1)
        analytic = gradient(obj, x)
        numeric = finite_difference(obj, x)
        assert np.abs(analytic - numeric).max() <= 1e-6 * max(1.0, np.abs(analytic).max())


class TestProjection:
    def test_clamp(self, wide_box):
        assert project(wide_box, np.array([40.0]))[0] == 30.0

    def test_identity_inside(self, wide_box):
        assert project(wide_box, np.array([12.5]))[0] == 12.5

    def test_componentwise(self):
        box = po.Box([-1.0, -1.0], [1.0, 1.0])
        np.testing.assert_array_equal(project(box, np.array([2.0, -3.0])), [1.0, -1.0])

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_nonexpansive_and_idempotent(self, seed):
        rng = np.random.default_rng(seed)
        dim = int(rng.integers(1, 4))
        lower = rng.uniform(-5, 0, dim)
        box = po.Box(lower, lower + rng.uniform(0.1, 5, dim))
        x, y = rng.uniform(-20, 20, dim), rng.uniform(-20, 20, dim)
        px, py = box.project(x), box.project(y)
        assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-15
        np.testing.assert_array_equal(box.project(px), px)

    def test_thousand_random_pairs(self):
        rng = np.random.default_rng(12)
        box = po.Box([-2.0, 0.5, -7.0], [1.0, 3.0, -1.0])
        x = rng.uniform(-20, 20, size=(1000, 3))
        y = rng.uniform(-20, 20, size=(1000, 3))
        px, py = box.project(x), box.project(y)
        assert np.all(np.linalg.norm(px - py, axis=1)
                      <= np.linalg.norm(x - y, axis=1) + 1e-15)
        np.testing.assert_array_equal(box.project(px), px)


class TestConvexity:
    def test_rejects_concave_polynomial(self, wide_box):
        with pytest.raises(ConvexityError):
            po.GlobalProblem(objectives=[po.PolynomialObjective([0, 0, -1.0])],
                             feasible=wide_box)

    def test_rejects_indefinite_quadratic(self):
        box = po.Box([-1.0, -1.0], [1.0, 1.0])
        with pytest.raises(ConvexityError):
            po.GlobalProblem(objectives=[po.QuadraticObjective([[1, 0], [0, -1]], [0, 0])],
                             feasible=box)

    def test_enforce_convex_false_is_allowed(self, wide_box):
        obj = po.PolynomialObjective([0, 0, 1, 0, -0.1], enforce_convex=False)
        po.GlobalProblem(objectives=[obj], feasible=wide_box, validate_convexity=False)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_segment_inequality(self, seed):
        rng = np.random.default_rng(seed)
        objs = quartic_objectives() + [po.LogisticObjective(seed=1, dim=1)]
        obj = objs[int(rng.integers(0, len(objs)))]
        x, y = rng.uniform(-5, 5, size=(2, 1))
        t = float(rng.random())
        lhs = obj.value(t * x + (1 - t) * y)
        rhs = t * obj.value(x) + (1 - t) * obj.value(y)
        assert lhs <= rhs + 1e-9


class TestSolveCentralized:
    def test_quartic_problem_optimum(self, quartic_problem):
        x_star, f_star = solve_centralized(quartic_problem)
        assert abs(x_star[0]) < 1e-6
        assert abs(f_star) < 1e-12

    def test_single_square(self, wide_box):
        problem = po.GlobalProblem(objectives=[po.PolynomialObjective([0, 0, 1])],
                                   feasible=wide_box)
        x_star, f_star = solve_centralized(problem)
        assert abs(x_star[0]) < 1e-8

    def test_boundary_optimum(self):
        # (x-5)^2 on [-1, 1]: optimum pinned at the upper bound
        problem = po.GlobalProblem(objectives=[po.PolynomialObjective([25.0, -10.0, 1.0])],
                                   feasible=po.Box([-1.0], [1.0]))
        x_star, f_star = solve_centralized(problem)
        assert x_star[0] == pytest.approx(1.0, abs=1e-9)
        grid = np.linspace(-1, 1, 20001)[:, None]
        assert f_star <= float(problem.total_value(grid).min()) + 1e-9

    def test_multivariate_quadratic(self):
        problem = po.GlobalProblem(
            objectives=[po.QuadraticObjective([[2.0, 0.0], [0.0, 4.0]], [-2.0, -4.0])],
            feasible=po.Box([-5.0, -5.0], [5.0, 5.0]))
        x_star, _ = solve_centralized(problem)
        np.testing.assert_allclose(x_star, [1.0, 1.0], atol=1e-6)


class TestEstimateConstants:
    def test_square_on_wide_box(self, wide_box):
        l, n = estimate_constants(po.PolynomialObjective([0, 0, 1]), wide_box)
        assert l == pytest.approx(60.0)
        assert n == pytest.approx(2.0)

    def test_constant_objective(self, wide_box):
        l, n = estimate_constants(po.PolynomialObjective([3.0]), wide_box)
        assert l == 0.0 and n == 0.0

    def test_quartic_on_unit_box(self):
        box = po.Box([-1.0], [1.0])
        l, n = estimate_constants(po.PolynomialObjective([0, 0, 0, 0, 1]), box)
        assert l == pytest.approx(4.0)
        assert n == pytest.approx(12.0)

    def test_constants_dominate_samples(self):
        box = po.Box([-2.0, -2.0], [2.0, 2.0])
        obj = po.LogisticObjective(seed=9, dim=2)
        l, n = estimate_constants(obj, box)
        pts = box.grid(35)
        assert np.max(np.linalg.norm(obj.gradient(pts), axis=-1)) <= l + 1e-12
        assert np.max(obj.curvature_norm(pts)) <= n + 1e-12
