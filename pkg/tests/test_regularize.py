import math

import numpy as np
import pytest

from deltaconvex import (ConvexPair, LipschitzFunction, NormedSpace,
                         ParameterError, PowerTypeConstant, SolverConfig,
                         SolverError, ball_grid, corpus_function, decompose,
                         inf_convolve, inf_convolve_grid, inner_minimize,
                         rate_bound, regularize_power, regularize_power_grid,
                         regularize_quadratic, search_radius, sup_distance)

L2_1 = NormedSpace(1, 2.0)
L2_2 = NormedSpace(2, 2.0)


def abs_fn():
    return corpus_function(L2_1, "norm")  # |x| in 1D


def const_fn(space, c):
    def ev(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], c) if x.ndim > 1 else c
    return LipschitzFunction(ev, 1.0, "const")


def huber(x, lam=1.0):
    x = abs(x)
    return lam * x * x if x <= 1.0 / (2 * lam) else x - 1.0 / (4 * lam)


class TestSearchRadius:
    def test_examples(self):
        assert search_radius(np.array([1.0]), 1.0, 3.0, L2_1) == 4.0
        assert search_radius(np.array([0.0]), 1.0, 10.0, L2_1) == 2.0
        # L = 2, lambda = 6 renormalizes to the threshold case
        assert search_radius(np.array([1.0]), 2.0, 6.0, L2_1) == 4.0

    def test_below_threshold(self):
        with pytest.raises(ParameterError, match="[Rr]aise lambda"):
            search_radius(np.array([1.0]), 1.0, 2.0, L2_1)

    def test_bad_parameters(self):
        with pytest.raises(ParameterError):
            search_radius(np.array([1.0]), 0.0, 3.0, L2_1)


class TestInnerMinimize:
    def test_smooth_quadratic(self):
        q = np.array([0.3, -0.4])

        def obj(y):
            y = np.atleast_2d(y)
            return ((y - q) ** 2).sum(axis=-1)

        y, v, diag = inner_minimize(obj, np.zeros(2), 2.0)
        assert v <= 1e-8
        assert np.abs(y - q).max() <= 1e-4
        assert diag["evaluations"] > 0

    def test_constant(self):
        def obj(y):
            y = np.atleast_2d(y)
            return np.full(y.shape[0], 7.0)

        _, v, _ = inner_minimize(obj, np.zeros(1), 1.0)
        assert v == 7.0

    def test_1d_kinked_oracle(self):
        # min of |y| + (y-1)^2 is 0.75 at y = 0.5 (frozen dense-grid value)
        def obj(y):
            y = np.atleast_2d(y)[:, 0]
            return np.abs(y) + (y - 1.0) ** 2

        y, v, _ = inner_minimize(obj, np.zeros(1), 3.0)
        assert abs(v - 0.75) <= 1e-6
        assert abs(y[0] - 0.5) <= 1e-3

    def test_scalar_objective_wrapped(self):
        y, v, _ = inner_minimize(lambda y: float((y ** 2).sum()),
                                 np.array([0.5]), 1.0)
        assert v <= 1e-8

    def test_non_finite_reported(self):
        def obj(y):
            y = np.atleast_2d(y)
            out = y[:, 0].copy()
            out[out > 0.5] = math.nan
            return out

        with pytest.raises(SolverError) as err:
            inner_minimize(obj, np.zeros(1), 2.0)
        assert err.value.point is not None

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            inner_minimize(lambda y: 0.0, np.zeros(1), 0.0)


class TestRegularizeQuadratic:
    def test_huber_oracle(self):
        f = abs_fn()
        for x in (0.25, 2.0, 0.0, -0.7):
            r = regularize_quadratic(f, 1.0, np.array([x]), L2_1)
            assert abs(r.value - huber(x)) <= 1e-6

    def test_constant_function(self):
        f = const_fn(L2_2, 5.0)
        for lam in (1.0, 4.0, 100.0):
            r = regularize_quadratic(f, lam, np.array([0.3, -0.9]), L2_2)
            assert abs(r.value - 5.0) <= 1e-9

    def test_upper_bound_contract_and_radius(self):
        f = corpus_function(L2_2, "distance")
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, size=(40, 2))
        vals, pts, _, _, R = regularize_power_grid(f, 2.0, 9.0, X, L2_2)
        assert np.all(vals <= f(X) + 1e-12)
        assert np.all(L2_2.norm(pts) <= R + 1e-9)

    def test_monotone_in_lambda(self):
        f = corpus_function(L2_2, "sawtooth")
        X = ball_grid(L2_2, np.zeros(2), 1.0, 9)
        prev = None
        for lam in (4.0, 16.0, 64.0):
            vals, _, _, _, _ = regularize_power_grid(f, 2.0, lam, X, L2_2)
            if prev is not None:
                assert np.all(prev <= vals + 2e-6)
            prev = vals

    def test_threshold_on_non_clarkson_space(self):
        space = NormedSpace(2, math.inf)
        f = corpus_function(space, "norm")
        with pytest.raises(ParameterError, match="threshold"):
            regularize_power_grid(f, 2.0, 1.0, np.zeros((1, 2)), space)
        vals, _, _, _, _ = regularize_power_grid(
            f, 2.0, 4.0, np.zeros((1, 2)), space)
        assert vals[0] <= 1e-9


class TestRegularizePower:
    def test_p2_matches_quadratic(self):
        f = corpus_function(L2_2, "max-affine")
        X = ball_grid(L2_2, np.zeros(2), 1.0, 7)
        a, _, _, _, _ = regularize_power_grid(f, 2.0, 9.0, X, L2_2)
        b = np.array([regularize_quadratic(f, 9.0, x, L2_2).value
                      for x in X])
        assert np.abs(a - b).max() <= 2e-6

    def test_p4_identity_rate(self):
        f = corpus_function(L2_1, "linear")
        X = np.linspace(-1.0, 1.0, 81)[:, None]
        vals, _, _, _, _ = regularize_power_grid(f, 4.0, 16.0, X, L2_1)
        sup = float(np.max(f(X) - vals))
        assert sup <= (1.0 / 16.0) ** (1.0 / 3.0)

    def test_constant(self):
        f = const_fn(L2_1, -2.0)
        r = regularize_power(f, 4.0, 16.0, np.array([0.4]), L2_1)
        assert abs(r.value + 2.0) <= 1e-9

    def test_bad_power(self):
        f = abs_fn()
        with pytest.raises(ParameterError):
            regularize_power(f, 1.5, 16.0, np.array([0.0]), L2_1)


class TestInfConvolve:
    def test_huber(self):
        f = abs_fn()
        r = inf_convolve(f, 2.0, 1.0, np.array([0.25]), L2_1)
        assert abs(r.value - 0.0625) <= 1e-6

    def test_pasch_hausdorff_identity(self):
        # power 1 with lambda >= L leaves a Lipschitz function unchanged
        f = corpus_function(L2_2, "distance")
        X = ball_grid(L2_2, np.zeros(2), 1.0, 7)
        vals, _, _, _, _ = inf_convolve_grid(f, 1.0, 1.0, X, L2_2)
        assert np.abs(vals - f(X)).max() <= 2e-6

    def test_constant(self):
        f = const_fn(L2_2, 3.0)
        r = inf_convolve(f, 2.0, 5.0, np.array([0.1, 0.1]), L2_2)
        assert abs(r.value - 3.0) <= 1e-9

    def test_bad_parameters(self):
        f = abs_fn()
        with pytest.raises(ParameterError):
            inf_convolve(f, 0.5, 1.0, np.array([0.0]), L2_1)
        with pytest.raises(ParameterError):
            inf_convolve(f, 2.0, -1.0, np.array([0.0]), L2_1)


class TestDecompose:
    def test_zero_function_closed_form(self):
        f = const_fn(L2_1, 0.0)
        pair = decompose(f, 4.0, L2_1)
        for x in (0.0, 0.5, -1.2):
            xv = np.array([x])
            assert abs(pair.d(xv) - 8.0 * x * x) <= 1e-6
            assert abs(pair.c(xv) - pair.d(xv)) <= 2e-6

    def test_identity_against_regularizer(self):
        f = corpus_function(L2_2, "sawtooth")
        pair = decompose(f, 9.0, L2_2)
        X = ball_grid(L2_2, np.zeros(2), 1.0, 5)
        lhs = pair.c(X) - pair.d(X)
        rhs, _, _, _, _ = regularize_power_grid(f, 2.0, 9.0, X, L2_2)
        assert np.abs(lhs - rhs).max() <= 2e-6

    def test_midpoint_convexity_fuzz(self):
        f = corpus_function(L2_2, "max-affine")
        pair = decompose(f, 9.0, L2_2)
        rng = np.random.default_rng(3)
        u = L2_2.ball_sample(rng, 10_000, radius=2.0)
        v = L2_2.ball_sample(rng, 10_000, radius=2.0)
        for g in (pair.c, pair.d):
            gu, gv, gm = g(u), g(v), g(0.5 * (u + v))
            assert np.max(gm - 0.5 * (gu + gv)) <= 1e-9 + 4e-6

    def test_pair_fields(self):
        pair = decompose(const_fn(L2_1, 0.0), 4.0, L2_1)
        assert isinstance(pair, ConvexPair)
        assert pair.lam == 4.0
        assert pair.c(np.array([0.0])) == 0.0


class TestGridHelpers:
    def test_ball_grid_filters(self):
        pts = ball_grid(L2_2, np.zeros(2), 1.0, 41)
        assert np.all(L2_2.norm(pts) <= 1.0 + 1e-12)
        assert len(pts) < 41 * 41

    def test_ball_grid_guards(self):
        with pytest.raises(ValueError):
            ball_grid(L2_2, np.zeros(2), 1.0, 1)
        with pytest.raises(ValueError):
            ball_grid(NormedSpace(5, 2.0), np.zeros(5), 1.0, 3)

    def test_sup_distance_zero(self):
        f = corpus_function(L2_2, "norm")
        assert sup_distance(f, f, L2_2, np.zeros(2), 1.0, 9) == 0.0

    def test_sup_distance_huber_gap(self):
        f = abs_fn()

        def g(x):
            return np.array([huber(t) for t in np.atleast_2d(x)[:, 0]])

        assert np.isclose(
            sup_distance(f, g, L2_1, np.zeros(1), 2.0, 17), 0.25)

    def test_sup_distance_norm_corners(self):
        space = NormedSpace(2, math.inf)
        f = corpus_function(space, "norm")

        def zero(x):
            return np.zeros(np.atleast_2d(x).shape[0])

        assert sup_distance(f, zero, space, np.zeros(2), 1.0, 3) == 1.0


class TestRateBound:
    def test_paper_value(self):
        assert np.isclose(rate_bound(2.0, 1.0, 100.0, 1.0), 0.01)

    def test_scaled_value(self):
        # L * (L/(lam C))^(1/(p-1)) with L=2: 2 * (2/100) = 0.04
        assert np.isclose(rate_bound(2.0, 1.0, 100.0, 2.0), 0.04)

    def test_p4_value(self):
        assert np.isclose(rate_bound(4.0, 1.0, 1000.0, 1.0), 0.1)

    def test_rejects_bad_constant(self):
        with pytest.raises(ParameterError):
            rate_bound(2.0, 0.0, 100.0)
        with pytest.raises(ParameterError):
            rate_bound(2.0, 1.5, 100.0)

    def test_empirical_constant_policy(self):
        c = PowerTypeConstant(value=0.5, empirical=True)
        with pytest.raises(ParameterError):
            rate_bound(2.0, c, 100.0)
        assert np.isclose(rate_bound(2.0, c, 100.0, allow_empirical=True),
                          0.02)
        exact = PowerTypeConstant(value=1.0, empirical=False)
        assert np.isclose(rate_bound(2.0, exact, 100.0), 0.01)


class TestSolverConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(coarse_samples=0)
        with pytest.raises(ValueError):
            SolverConfig(tolerance=0.0)
        with pytest.raises(ValueError):
            SolverConfig(starts=0)

    def test_determinism(self):
        f = corpus_function(L2_2, "distance")
        X = np.array([[0.3, -0.2], [0.9, 0.1]])
        a = regularize_power_grid(f, 2.0, 9.0, X, L2_2)[0]
        b = regularize_power_grid(f, 2.0, 9.0, X, L2_2)[0]
        assert np.array_equal(a, b)
