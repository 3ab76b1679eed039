import math

import numpy as np
import pytest
from scipy import stats

from conftest import brute_force_kde
from mfis import _kernels, _pykernels
from mfis.distributions import GpdParams, quadrature
from mfis.errors import BoundaryShapeError, DegenerateError, DomainError
from mfis.estimate import (DensityEstimate, GpdFit, ci_kde_log, ci_log_delta, ci_tail,
                           exceed_mass, fit_gpd_weighted, fit_tail_by_count, gpd_thresholds,
                           kde_mass, smith_covariance, splice, splice_by_counts,
                           transform_pipeline, weighted_kde, TransformedSpliced)
from mfis.sampling import WeightedSample


def unit_sample(y, w=None, n_divisor=None):
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    n = y.size
    return WeightedSample(np.arange(n), y, y, w, ["center"] * n, np.zeros(n), n_divisor)


def gpd_draws(xi, beta, n, seed):
    return stats.genpareto.rvs(xi, scale=beta, size=n, random_state=seed)


class TestKde:
    def test_single_point(self):
        est = weighted_kde(unit_sample([0.0], [2.0], n_divisor=2), 1.0, [0.0])
        assert est.value[0] == pytest.approx(0.3989422804, abs=1e-9)

    def test_matches_double_loop(self, rng):
        y = rng.normal(size=100)
        grid = np.linspace(-4, 4, 57)
        est = weighted_kde(unit_sample(y), 0.4, grid)
        assert np.max(np.abs(est.value - brute_force_kde(y, np.ones(100), 100, 0.4, grid))) < 1e-12

    def test_weighted_matches_double_loop(self, rng):
        y = rng.normal(size=60)
        w = rng.gamma(2.0, size=60)
        grid = np.linspace(-3, 3, 31)
        est = weighted_kde(unit_sample(y, w, 80), 0.3, grid)
        assert np.allclose(est.value, brute_force_kde(y, w, 80, 0.3, grid), rtol=1e-12,
                           atol=1e-300)

    def test_backends_agree(self, rng):
        grid = np.linspace(-50, 50, 201)
        y = rng.standard_t(3, 150) * 10
        w = rng.gamma(2.0, 0.5, 150)
        a = _kernels.kde_log_sums(grid, y, w, 3.0)
        b = _pykernels.kde_log_sums(grid, y, w, 3.0)
        assert np.allclose(a[0], b[0], rtol=1e-12) and np.allclose(a[1], b[1], rtol=1e-12)

    def test_far_tail_is_not_zero(self):
        # log-space sums keep the density positive far from the data
        est = weighted_kde(unit_sample([0.0, 1.0]), 0.5, [15.0])
        assert est.value[0] > 0

    def test_variance_plug_in(self, rng):
        y = rng.normal(size=40)
        w = rng.gamma(2.0, size=40)
        est = weighted_kde(unit_sample(y, w), 0.5, [0.3])
        k = stats.norm.pdf((0.3 - y) / 0.5) / 0.5
        f = np.mean(k * w)
        assert est.variance[0] == pytest.approx(max((np.mean(k * k * w * w) - f * f) / 40, 0))

    def test_in_range_and_errors(self):
        est = weighted_kde(unit_sample([1.0, 2.0]), 1.0, [0.0, 1.0, 1.5, 2.0, 3.0])
        assert list(est.in_data_range) == [False, True, True, True, False]
        with pytest.raises(DegenerateError):
            weighted_kde(unit_sample([]), 1.0, [0.0])
        with pytest.raises(ValueError):
            weighted_kde(unit_sample([0.0]), 0.0, [0.0])

    def test_closed_form_mass(self, rng):
        y = rng.normal(size=30)
        m = kde_mass(y, np.ones(30), 30, 0.5, -math.inf, math.inf)
        assert m == pytest.approx(1.0, abs=1e-14)

    def test_csv_round_trip(self, tmp_path, rng):
        est = ci_kde_log(weighted_kde(unit_sample(rng.normal(size=20)), 0.5,
                                      np.linspace(-2, 2, 9)), 0.05)
        path = tmp_path / "d.csv"
        est.to_csv(path)
        back = DensityEstimate.from_csv(path)
        assert back.to_csv() == est.to_csv()
        assert est.to_csv().splitlines()[0] == "y,fhat,log_fhat,var,in_range,ci_low,ci_high,region"


class TestGpdFit:
    def test_recovers_parameters(self):
        inside = 0
        for k in range(20):
            u = gpd_draws(0.2, 1.0, 5000, 100 + k)
            fit = fit_gpd_weighted(u)
            se = np.sqrt(np.diag(smith_covariance(0.2, 1.0, 5000)))
            inside += (abs(fit.params.xi - 0.2) < 3 * se[0]
                       and abs(fit.params.beta - 1.0) < 3 * se[1])
        assert inside >= 18

    def test_rescaling_weights(self, rng):
        u = gpd_draws(0.3, 2.0, 300, 7)
        w = rng.gamma(2.0, size=300)
        a = fit_gpd_weighted(u, w)
        b = fit_gpd_weighted(u, 10 * w)
        assert abs(a.params.xi - b.params.xi) < 1e-8
        assert abs(a.params.beta - b.params.beta) < 1e-8

    def test_equal_weights_are_unweighted(self):
        u = gpd_draws(0.1, 1.0, 200, 8)
        a = fit_gpd_weighted(u)
        b = fit_gpd_weighted(u, np.full(200, 3.0))
        assert abs(a.params.xi - b.params.xi) < 1e-8

    def test_agrees_with_scipy(self):
        u = gpd_draws(0.25, 1.5, 2000, 9)
        fit = fit_gpd_weighted(u)
        c, _, scale = stats.genpareto.fit(u, floc=0.0)
        assert fit.params.xi == pytest.approx(c, abs=2e-3)
        assert fit.params.beta == pytest.approx(scale, rel=2e-3)

    def test_exponential(self):
        u = np.random.default_rng(3).exponential(2.0, 5000)
        assert abs(fit_gpd_weighted(u).params.xi) < 0.1

    def test_covariance(self):
        fit = fit_gpd_weighted(gpd_draws(0.2, 1.0, 500, 1))
        xi, beta = fit.params.xi, fit.params.beta
        assert np.allclose(fit.cov, smith_covariance(xi, beta, 500))
        assert fit.cov[0, 0] == pytest.approx((1 + xi) ** 2 / 500)

    def test_degenerate(self):
        with pytest.raises(DegenerateError, match="degenerate"):
            fit_gpd_weighted(np.full(10, 2.0))
        with pytest.raises(DegenerateError):
            fit_gpd_weighted(np.array([1.0, 2.0]))
        with pytest.raises(DomainError):
            fit_gpd_weighted(np.array([1.0, 2.0, 0.0, 3.0, 4.0]))

    def test_boundary_shape(self):
        # uniform exceedances sit at xi = -1
        u = np.linspace(0.01, 1.0, 400)
        with pytest.raises(BoundaryShapeError, match="threshold") as info:
            fit_gpd_weighted(u, side="left")
        assert info.value.side == "left"


class TestExceedMass:
    def test_all_exceed(self):
        c, var, empty = exceed_mass(unit_sample([1.0, 2.0, 3.0]), 0.0, "right")
        assert (c, var, empty) == (1.0, 0.0, False)

    def test_none_exceed(self):
        c, var, empty = exceed_mass(unit_sample([1.0, 2.0, 3.0]), 5.0, "right")
        assert c == 0.0 and empty

    def test_calibrated_tail(self):
        N, N0, r = 150, 10**6, 25
        y = np.r_[np.zeros(125), np.arange(1.0, 26.0)]
        w = np.r_[np.ones(125), np.full(25, N / N0)]
        c, _, _ = exceed_mass(unit_sample(y, w), 1.0, "right")
        assert c == pytest.approx(r / N0, rel=1e-12)

    def test_left_side(self):
        c, _, _ = exceed_mass(unit_sample([1.0, 2.0, 3.0, 4.0]), 2.0, "left")
        assert c == 0.5


def heavy_sample(n=400, seed=0):
    g = np.random.default_rng(seed)
    return unit_sample(g.standard_t(4, n))


class TestSplice:
    def test_thresholds(self):
        assert gpd_thresholds(np.arange(10.0), 2, 3) == (1.0, 7.0)

    def test_at_threshold_from_above(self):
        s = heavy_sample()
        sp = splice_by_counts(s, 0.4, 25, 25)
        y = sp.y_R + 1e-12
        assert sp.eval(y) == pytest.approx(sp.right.exceed_mass / sp.right.params.beta, rel=1e-9)
        assert sp.right.exceed_mass == pytest.approx(25 / 400)

    def test_zero_mass_tail(self):
        s = heavy_sample()
        sp = splice_by_counts(s, 0.4, 25, 25)
        sp.right = None
        assert sp.eval(sp.y_R + 1.0) == 0.0

    def test_nonnegative_and_regions(self):
        sp = splice_by_counts(heavy_sample(), 0.4, 25, 25)
        grid = np.linspace(-30, 30, 301)
        assert np.all(sp.eval(grid) >= 0)
        reg = sp.region(grid)
        assert set(reg) == {"gpd_left", "core", "gpd_right"}

    def test_renormalized_integrates_to_one(self):
        sp = splice_by_counts(heavy_sample(), 0.4, 25, 25, renormalize=True)
        total = quadrature(sp.eval, -math.inf, math.inf, points=sp.breakpoints(), rtol=1e-10)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_splice_accepts_estimate(self):
        s = heavy_sample()
        core = weighted_kde(s, 0.4, [0.0])
        a = splice(core, s, -1.5, 1.5)
        b = splice(0.4, s, -1.5, 1.5)
        assert a.eval(0.0) == b.eval(0.0)

    def test_count_search_moves_off_boundary(self):
        # a tight cluster at the top bounds the tail for counts reaching past it
        g = np.random.default_rng(3)
        s = unit_sample(np.r_[g.normal(size=300), 3 + 0.05 * g.random(24)])
        with pytest.raises(BoundaryShapeError):
            fit_tail_by_count(s, 30, "right")
        count, thr, fit = fit_tail_by_count(s, 30, "right", max_shift=5)
        assert count == 25 and fit.params.xi > -0.5
        assert thr == np.sort(s.y)[-25]

    def test_bands(self):
        sp = splice_by_counts(heavy_sample(), 0.4, 25, 25)
        grid = np.linspace(-10, 10, 41)
        est = sp.estimate(grid, alpha=0.05, B=100, rng_seed=1)
        ok = ~np.isnan(est.ci_low)
        assert np.all(est.ci_low[ok] <= est.value[ok] * (1 + 1e-12) + 1e-300)
        assert np.all(est.ci_low[ok] >= 0)
        assert ok.sum() > 30


class TestTransform:
    def test_identity_power(self, rng):
        s = unit_sample(rng.lognormal(size=80))
        grid = np.linspace(0.1, 10, 50)
        a = transform_pipeline(s, 1.0, 0.5, grid)
        b = weighted_kde(s, 0.5, grid)
        assert np.array_equal(a.value, b.value)
        assert np.array_equal(a.variance, b.variance)

    def test_lognormal(self):
        s = unit_sample(np.random.default_rng(2).lognormal(0.0, 0.5, 4000))
        grid = np.exp(np.linspace(-0.8, 0.8, 30))
        est = transform_pipeline(s, 0.0, 0.08, grid)
        truth = stats.lognorm.pdf(grid, 0.5)
        # four standard errors of the estimator plus a small bias allowance
        assert np.all(np.abs(est.value - truth) < 4 * np.sqrt(est.variance) + 0.03 * truth)

    def test_scaled_variance_identity(self, rng):
        y = rng.lognormal(size=100)
        s = unit_sample(y, rng.gamma(2.0, size=100))
        grid = np.linspace(0.2, 5, 25)
        est = transform_pipeline(s, 0.5, 0.3, grid)
        z = unit_sample((np.sqrt(y) - 1) / 0.5, s.weight)
        ez = weighted_kde(z, 0.3, (np.sqrt(grid) - 1) / 0.5)
        assert np.allclose(est.variance / est.value ** 2, ez.variance / ez.value ** 2,
                           rtol=1e-10)

    def test_domain(self):
        with pytest.raises(DomainError, match="transform domain"):
            transform_pipeline(unit_sample([1.0, -1.0]), 0.0, 0.1, [1.0])

    def test_transformed_splice_mass(self):
        g = np.random.default_rng(4)
        s = unit_sample(g.lognormal(0.0, 0.6, 400))
        sp = TransformedSpliced(s, 0.0, 0.15, 25, 25, renormalize=True)
        lo, hi = sp.y_L, sp.y_R
        total = quadrature(sp.eval, 0.0, math.inf, points=(lo, hi), center=1.0, rtol=1e-10)
        assert total == pytest.approx(1.0, abs=1e-6)


class TestBands:
    def test_log_delta_example(self):
        lo, hi = ci_log_delta(np.array([1.0]), np.array([0.04]), 0.05)
        assert lo[0] == pytest.approx(0.6757, abs=1e-4)
        assert hi[0] == pytest.approx(1.4798, abs=2e-4)

    def test_zero_variance_collapses(self):
        lo, hi = ci_log_delta(np.array([0.5]), np.array([0.0]), 0.05)
        assert lo[0] == hi[0] == 0.5

    def test_zero_estimate_omitted(self):
        lo, hi = ci_log_delta(np.array([0.0, 1.0]), np.array([0.0, 0.01]), 0.05)
        assert np.isnan(lo[0]) and lo[1] > 0

    def test_tail_collapse(self):
        p = GpdParams(0.2, 1.0, 0.0, "right")
        fit = GpdFit(p, 0.01, 1e-6, 25, False, np.zeros((2, 2)))
        lo, hi = ci_tail(fit, 2.0, 0.05)
        g = np.exp(stats.genpareto.logpdf(2.0, 0.2))
        c_lo, c_hi = ci_log_delta(np.array([0.01]), np.array([1e-6]), 0.05,
                                  level=math.sqrt(0.95))
        assert lo == pytest.approx(g * c_lo[0], rel=1e-12)
        assert hi == pytest.approx(g * c_hi[0], rel=1e-12)

    def test_tail_ordered(self):
        fit = fit_gpd_weighted(gpd_draws(0.2, 1.0, 50, 3), exceed_mass=0.05,
                               exceed_var=1e-5)
        lo, hi = ci_tail(fit, np.linspace(0.1, 8, 20), 0.05)
        assert np.all(0 <= lo) and np.all(lo <= hi)

    def test_tail_level(self):
        assert math.sqrt(1 - 0.05) == pytest.approx(0.9747, abs=1e-4)
