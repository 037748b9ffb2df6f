import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deltaconvex import (DimensionMismatchError, NormedSpace, SampleBudget,
                         analytic_modulus_lower, modulus_of_convexity,
                         power_type_constant)


def vec(*xs):
    return np.array(xs, dtype=float)


class TestNorm:
    def test_linf_example(self):
        assert NormedSpace(2, math.inf).norm(vec(1.0, -2.0)) == 2.0

    def test_l2_example(self):
        assert NormedSpace(2, 2.0).norm(vec(3.0, 4.0)) == 5.0

    def test_l1_example(self):
        assert NormedSpace(3, 1.0).norm(vec(0.5, -0.5, 1.0)) == 2.0

    def test_general_p(self):
        n = NormedSpace(2, 3.0).norm(vec(1.0, 1.0))
        assert np.isclose(n, 2.0 ** (1.0 / 3.0))

    def test_batched(self):
        space = NormedSpace(2, 2.0)
        out = space.norm(np.array([[3.0, 4.0], [0.0, 0.0]]))
        assert np.allclose(out, [5.0, 0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            NormedSpace(3, 2.0).norm(vec(1.0, 2.0))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            NormedSpace(2, 2.0).norm(vec(1.0, math.nan))

    def test_bad_exponent_rejected(self):
        with pytest.raises(ValueError):
            NormedSpace(2, 0.5)
        with pytest.raises(ValueError):
            NormedSpace(0, 2.0)

    @settings(max_examples=200, deadline=None, derandomize=True)
    @given(st.lists(st.floats(-100, 100), min_size=3, max_size=3),
           st.lists(st.floats(-100, 100), min_size=3, max_size=3),
           st.sampled_from([1.0, 1.5, 2.0, 3.0, math.inf]),
           st.floats(-10, 10))
    def test_norm_axioms(self, xs, ys, p, t):
        space = NormedSpace(3, p)
        x, y = vec(*xs), vec(*ys)
        nx, ny = space.norm(x), space.norm(y)
        assert nx >= 0
        assert space.norm(x + y) <= nx + ny + 1e-9 * (1 + nx + ny)
        assert np.isclose(space.norm(t * x), abs(t) * nx,
                          rtol=1e-12, atol=1e-12)

    def test_dual_exponent(self):
        assert NormedSpace(2, 1.0).dual_exponent() == math.inf
        assert NormedSpace(2, math.inf).dual_exponent() == 1.0
        assert NormedSpace(2, 2.0).dual_exponent() == 2.0
        assert np.isclose(NormedSpace(2, 3.0).dual_exponent(), 1.5)


class TestDefects:
    def test_defect2_antipodal(self):
        space = NormedSpace(2, 2.0)
        e1 = vec(1.0, 0.0)
        assert space.defect2(e1, -e1) == 4.0

    def test_defect_p_tightness_witness(self):
        # |x-y|^4 = 16 is attained at the antipodal pair on l_2
        space = NormedSpace(2, 2.0)
        e1 = vec(1.0, 0.0)
        assert space.defect_p(4.0, e1, -e1) == 16.0

    def test_defect2_zero_at_equal_points(self):
        space = NormedSpace(2, 1.0)
        x = vec(1.0, 2.0)
        assert abs(space.defect2(x, x)) < 1e-12

    def test_parallelogram_l2(self):
        space = NormedSpace(3, 2.0)
        rng = np.random.default_rng(0)
        x = space.ball_sample(rng, 500, radius=2.0)
        y = space.ball_sample(rng, 500, radius=2.0)
        q = space.defect2(x, y)
        ref = space.norm(x - y) ** 2
        assert np.allclose(q, ref, rtol=1e-13, atol=1e-12)

    def test_defect2_lower_bound_fuzz(self):
        rng = np.random.default_rng(1)
        for p in (1.0, 1.5, 2.0, 3.0, math.inf):
            space = NormedSpace(3, p)
            x = space.ball_sample(rng, 2000, radius=2.0)
            y = space.ball_sample(rng, 2000, radius=2.0)
            gap = space.defect2(x, y) - (space.norm(x) - space.norm(y)) ** 2
            assert gap.min() >= -1e-9

    def test_defect_p_high_power_compensated(self):
        space = NormedSpace(2, 2.0)
        rng = np.random.default_rng(2)
        x = space.ball_sample(rng, 200, radius=1.0)
        q = space.defect_p(12.0, x, x * (1.0 + 1e-9))
        assert np.all(q >= -1e-9)

    def test_defect_p_rejects_small_exponent(self):
        with pytest.raises(ValueError):
            NormedSpace(2, 2.0).defect_p(1.5, vec(1, 0), vec(0, 1))


class TestModulus:
    def test_l2_analytic_match(self):
        space = NormedSpace(2, 2.0)
        for eps in (0.5, 1.0, 1.5):
            est = modulus_of_convexity(space, eps)
            ref = analytic_modulus_lower(space, eps)
            assert abs(est.upper - ref) <= 1e-3
            assert est.lower <= est.upper + 1e-12

    def test_l2_eps_one_value(self):
        ref = analytic_modulus_lower(NormedSpace(2, 2.0), 1.0)
        assert np.isclose(ref, 1.0 - math.sqrt(3.0) / 2.0)

    def test_l1_flat_at_one(self):
        est = modulus_of_convexity(NormedSpace(2, 1.0), 1.0)
        assert est.upper == 0.0

    def test_eps_two_full_convexity(self):
        est = modulus_of_convexity(NormedSpace(2, 2.0), 2.0)
        assert abs(est.upper - 1.0) <= 1e-3

    def test_domain(self):
        space = NormedSpace(2, 2.0)
        with pytest.raises(ValueError):
            modulus_of_convexity(space, 0.0)
        with pytest.raises(ValueError):
            modulus_of_convexity(space, 2.5)

    def test_budget_respected(self):
        budget = SampleBudget(samples=256, refine_iterations=50, seed=3)
        est = modulus_of_convexity(NormedSpace(2, 2.0), 1.0, budget)
        assert est.lower <= est.upper


class TestPowerType:
    def test_analytic_one(self):
        c = power_type_constant(NormedSpace(2, 2.0), 2.0)
        assert c.value == 1.0 and not c.empirical
        c = power_type_constant(NormedSpace(3, 3.0), 4.0)
        assert c.value == 1.0 and not c.empirical

    def test_l1_degenerate(self):
        c = power_type_constant(NormedSpace(2, 1.0), 2.0, samples=2000)
        assert c.empirical
        assert c.value == 0.0  # witness pair e_1, e_2 collapses the defect

    def test_empirical_flag(self):
        c = power_type_constant(NormedSpace(2, math.inf), 2.0, samples=2000)
        assert c.empirical
        assert 0.0 <= c.value <= 1.0
