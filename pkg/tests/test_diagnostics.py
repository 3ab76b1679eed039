import math

import numpy as np
import pytest

from mfis import branches as br
from mfis.diagnostics import (BetaRatioLaw, ScaledVarianceCurve, beta_ratio_law,
                              empirical_scaled_variance, homoscedastic_deviation,
                              simulate_beta_ratio, tail_prob_relative_variance,
                              theory_scaled_variance_noiseless)
from mfis.distributions import GAUSS_L2_NORM_SQ, Normal, Uniform
from mfis.errors import DomainError
from mfis.estimate import DensityEstimate


def estimate(values, grid=None, observed=None):
    values = np.asarray(values, dtype=float)
    grid = np.arange(values.size, dtype=float) if grid is None else grid
    observed = np.ones(values.size, dtype=bool) if observed is None else observed
    return DensityEstimate(grid, values, np.zeros(values.size), observed)


class TestTheoryNoiseless:
    def test_optimal_proposal_is_flat(self):
        # m(x) = x^2 on (1, 3), g proportional to m'
        b = br.Branch(1.0, 3.0, lambda x: np.asarray(x) ** 2, lambda x: 2 * np.asarray(x),
                      lambda y: np.sqrt(y))
        g = lambda x: 2 * np.asarray(x) / 8.0
        y = np.linspace(1.01, 8.99, 200)
        v = theory_scaled_variance_noiseless(b, g, 0.3, y)
        assert np.ptp(v) < 1e-8
        assert v[0] == pytest.approx(GAUSS_L2_NORM_SQ * 8.0 / 0.3 - 1)

    def test_nominal_proposal(self):
        b = br.linear_branch(-10.0, 10.0, -30.0, 30.0)
        f = Normal()
        y = np.array([-3.0, 0.0, 6.0])
        f_Y = f.eval(y / 3.0) / 3.0
        v = theory_scaled_variance_noiseless(b, f.eval, 0.5, y)
        assert np.allclose(v, GAUSS_L2_NORM_SQ / (0.5 * f_Y) - 1)

    def test_algebraic_zero(self):
        b = br.linear_branch(0.0, 1.0, 0.0, 1.0)
        v = theory_scaled_variance_noiseless(b, Uniform(0.0, 1.0).eval, GAUSS_L2_NORM_SQ, 0.5)
        assert v == pytest.approx(0.0, abs=1e-15)

    def test_outside_image(self):
        b = br.linear_branch(0.0, 1.0, 0.0, 1.0)
        with pytest.raises(DomainError):
            theory_scaled_variance_noiseless(b, Uniform(0.0, 1.0).eval, 0.3, 2.0)


class TestHomoscedasticDeviation:
    def test_small_sigma_limit(self):
        f = Normal(0.0, 2.0)
        # both integrals collapse: ratio -> f(y)^2 / f(y)^2
        r = homoscedastic_deviation(f.eval, 1e-6, Normal().eval, 0.7)
        assert r == pytest.approx(1.0, rel=1e-2)

    def test_constant_density(self):
        flat = lambda y: np.where(np.abs(np.asarray(y)) < 1000.0, 1 / 2000.0, 0.0)
        assert homoscedastic_deviation(flat, 2.0, Normal().eval, 0.0) == pytest.approx(1.0,
                                                                                        abs=1e-10)

    def test_gaussian_closed_form(self):
        # int phi^3 / (int phi^2)^2 = (1 / (2 pi sqrt 3)) / (1 / (4 pi)) = 2 / sqrt 3
        r = homoscedastic_deviation(Normal().eval, 1.0, Normal().eval, 0.0)
        assert r == pytest.approx(2 / math.sqrt(3), rel=1e-8)

    def test_negative_sigma(self):
        with pytest.raises(ValueError):
            homoscedastic_deviation(Normal().eval, -1.0, Normal().eval, 0.0)


class TestEmpirical:
    def test_identical(self):
        c = empirical_scaled_variance([estimate([1.0, 2.0])] * 3, lambda g: np.ones_like(g), 10)
        assert np.all(c.values == 0)

    def test_two_point(self):
        c = empirical_scaled_variance([estimate([3.0]), estimate([1.0])],
                                      lambda g: np.ones_like(g), 1)
        assert c.values[0] == pytest.approx((3.0 - 1.0) ** 2 / 2)

    def test_mean_reference_scale_invariant(self, rng):
        vals = rng.gamma(2.0, size=(5, 8))
        a = empirical_scaled_variance([estimate(v) for v in vals], None, 150)
        b = empirical_scaled_variance([estimate(7 * v) for v in vals], None, 150)
        assert np.allclose(a.values, b.values, rtol=1e-12)
        assert a.tag == "empirical:mean"

    def test_unobserved_and_zero_reference_omitted(self):
        obs = np.array([True, False, True])
        ests = [estimate([1.0, 2.0, 3.0], observed=obs), estimate([2.0, 2.0, 1.0], observed=obs)]
        c = empirical_scaled_variance(ests, lambda g: np.array([1.0, 1.0, 0.0]), 1)
        assert list(c.grid) == [0.0]

    def test_needs_two(self):
        with pytest.raises(ValueError):
            empirical_scaled_variance([estimate([1.0])], None, 1)

    def test_ratio_and_csv(self):
        c = ScaledVarianceCurve([0.0, 1.0], [2.0, 8.0], "empirical")
        assert c.max_min_ratio() == 4.0
        assert c.to_csv().splitlines() == ["y,scaled_var,source", "0,2,empirical:true",
                                           "1,8,empirical:true"]


class TestBetaRatio:
    def test_closed_form(self):
        assert beta_ratio_law(1000, 26).mean == pytest.approx(1.03896, abs=1e-5)

    def test_r_equals_n0(self):
        law = beta_ratio_law(50, 50)
        assert law.mean == pytest.approx(50 ** 2 / (49 * 51))
        assert law.mean > 1

    def test_variance_decreasing_in_r(self):
        v = [beta_ratio_law(200, r).variance for r in range(2, 201)]
        assert np.all(np.diff(v) < 0)

    def test_monte_carlo(self):
        draws = simulate_beta_ratio(1000, 26, 5000, seed=1)
        law = beta_ratio_law(1000, 26)
        assert abs(draws.mean() / law.mean - 1) < 0.02
        assert draws.var() == pytest.approx(law.variance, rel=0.1)

    def test_invalid(self):
        with pytest.raises(ValueError):
            beta_ratio_law(100, 1)
        with pytest.raises(ValueError):
            beta_ratio_law(10, 11)

    def test_relative_variance(self):
        assert tail_prob_relative_variance(10**6, 10) == 0.1
        assert tail_prob_relative_variance(10**6, 25) == 0.04
        assert tail_prob_relative_variance(10**6, 1) == 1.0

    def test_dataclass(self):
        assert BetaRatioLaw(1000, 26) == beta_ratio_law(1000, 26)
