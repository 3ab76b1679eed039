import numpy as np
import pytest

from mfis import _kernels, _pykernels
from mfis.distributions import TabulatedDensity, Uniform
from mfis.io import ReplayOracle
from mfis.proposal import build_proposal, calibrate_thresholds, optimal_p_piecewise, uniform_p
from mfis.sampling import (LowFiPool, WeightedSample, inverse_cdf_sample,
                           sample_adaptive_with_tails, sample_algorithm1, sample_algorithm2)
from mfis.scenarios import SyntheticOracle, make_f_X, mean_function, preset


def small_pool():
    x = np.arange(1.0, 11.0)
    seeds = np.arange(100, 110)
    return LowFiPool(seeds, x), ReplayOracle(seeds, x, 2 * x)


def m1_setup(N0=6000, key=3):
    c = preset("m1", N0=N0)
    f_X = make_f_X(c.f_X)
    oracle = SyntheticOracle(mean_function("m1"), f_X, "homoscedastic", 6.0, key)
    pool = LowFiPool.from_oracle(oracle, N0)
    plan = calibrate_thresholds(pool.sorted_x, 25, 25, 150)
    spec = build_proposal(plan, uniform_p(plan.x_L, plan.x_R))
    return pool, oracle, f_X, plan, spec


class TestPool:
    def test_duplicate_seed(self):
        with pytest.raises(ValueError, match="unique"):
            LowFiPool([1, 1], [0.0, 1.0])

    def test_sorted_view(self):
        pool = LowFiPool([5, 6, 7], [0.3, -1.0, 2.0])
        assert list(pool.sorted_seeds) == [6, 5, 7]


class TestNearestUnused:
    @pytest.mark.parametrize("impl", [_kernels, _pykernels])
    def test_consumed_neighbour(self, impl):
        pool = np.array([0.1, 0.3, 0.9])
        used = np.zeros(3, dtype=np.uint8)
        assert list(impl.nearest_unused(pool, used, np.array([0.35, 0.32]))) == [1, 0]

    @pytest.mark.parametrize("impl", [_kernels, _pykernels])
    def test_tie_goes_to_smaller(self, impl):
        used = np.zeros(2, dtype=np.uint8)
        assert list(impl.nearest_unused(np.array([0.0, 1.0]), used, np.array([0.5]))) == [0]

    def test_backends_agree(self, rng):
        pool = np.sort(rng.normal(size=5000))
        draws = rng.normal(size=300)
        a = _kernels.nearest_unused(pool, np.zeros(pool.size, dtype=np.uint8), draws)
        b = _pykernels.nearest_unused(pool, np.zeros(pool.size, dtype=np.uint8), draws)
        assert np.array_equal(a, b)
        assert np.unique(a).size == a.size


class TestInverseCdf:
    def test_uniform(self):
        assert inverse_cdf_sample(uniform_p(0.0, 1.0), 0.25) == pytest.approx(0.25, abs=1e-3)

    def test_linear_density(self):
        p = TabulatedDensity(lambda x: 2 * np.asarray(x), 0.0, 1.0)
        assert inverse_cdf_sample(p, 0.25) == pytest.approx(0.5, abs=1e-3)

    def test_boundaries_and_monotone(self):
        p = uniform_p(-2.0, 3.0)
        assert inverse_cdf_sample(p, 0.0) == -2.0
        assert inverse_cdf_sample(p, 1.0) == 3.0
        u = np.linspace(0, 1, 101)
        assert np.all(np.diff(inverse_cdf_sample(p, u)) >= 0)


class TestAlgorithm1:
    def test_small_pool_bookkeeping(self):
        pool, oracle = small_pool()
        plan = calibrate_thresholds(pool.sorted_x, 2, 2, 6)
        spec = build_proposal(plan, uniform_p(plan.x_L, plan.x_R))
        s = sample_algorithm1(pool, spec, oracle, 0, Uniform(0.0, 11.0))
        assert len(s) == 6
        assert {1.0, 2.0, 9.0, 10.0} <= set(s.x)
        assert list(s.region).count("center") == 2
        assert np.array_equal(s.y, 2 * s.x)

    def test_more_draws_than_pool(self):
        pool, oracle = small_pool()
        with pytest.raises(ValueError):
            calibrate_thresholds(pool.sorted_x, 2, 2, 11)

    def test_whole_pool(self):
        pool, oracle = small_pool()
        plan = calibrate_thresholds(pool.sorted_x, 2, 2, 10)
        spec = build_proposal(plan, uniform_p(plan.x_L, plan.x_R))
        s = sample_algorithm1(pool, spec, oracle, 0, Uniform(0.0, 11.0))
        assert sorted(s.seed) == list(pool.seeds)

    def test_region_shares_and_tail_weights(self):
        pool, oracle, f_X, plan, spec = m1_setup()
        s = sample_algorithm1(pool, spec, oracle, 7, f_X)
        regions = list(s.region)
        assert (regions.count("left-tail"), regions.count("center"),
                regions.count("right-tail")) == (25, 100, 25)
        tails = s.region != "center"
        assert np.all(s.weight[tails] == 150 / 6000)
        assert set(s.seed[:25]) == set(pool.sorted_seeds[:25])
        assert set(s.seed[-25:]) == set(pool.sorted_seeds[-25:])
        assert np.unique(s.seed).size == len(s)

    def test_deterministic(self):
        pool, oracle, f_X, plan, spec = m1_setup()
        a = sample_algorithm1(pool, spec, oracle, 11, f_X).to_csv()
        b = sample_algorithm1(pool, spec, oracle, 11, f_X).to_csv()
        assert a == b

    def test_csv_round_trip(self, tmp_path):
        pool, oracle, f_X, plan, spec = m1_setup()
        s = sample_algorithm1(pool, spec, oracle, 11, f_X)
        path = tmp_path / "s.csv"
        s.to_csv(path)
        t = WeightedSample.from_csv(path)
        assert t.to_csv() == s.to_csv()


def linear_oracle():
    # m(x) = 3x, X uniform on (0, 1), no noise
    return SyntheticOracle(mean_function("m1"), Uniform(0.0, 1.0), "none", 0.0, key=5)


class TestAlgorithm2:
    def test_zero_rounds(self):
        res = sample_algorithm2(Uniform(0.0, 1.0), 0.05, 0.95, linear_oracle(), 0, 0)
        assert len(res.sample) == 0
        assert len(res.initial) == 20
        assert res.model.n_breakpoints == 0

    def test_linear_oracle_gives_uniform_proposal(self):
        f_X = Uniform(0.0, 1.0)
        res = sample_algorithm2(f_X, 0.05, 0.95, linear_oracle(), 0, 5)
        p = optimal_p_piecewise(res.model, f_X, 0.05, 0.95)
        x = np.linspace(0.06, 0.94, 200)
        assert np.max(np.abs(p.eval(x) * 0.9 - 1)) < 1e-6
        assert np.allclose(res.sample.weight, 0.9, rtol=0.02)
        assert not any(r["fallback"] for r in res.round_log)

    def test_m2_central_targets_stay_central(self):
        c = preset("m2", N0=200_000)
        f_X = make_f_X(c.f_X)
        oracle = SyntheticOracle(mean_function("m2"), f_X, "homoscedastic", 6.0, 9)
        pool = LowFiPool.from_oracle(oracle, c.N0)
        plan = calibrate_thresholds(pool.sorted_x, 25, 25, 150)
        sample, res = sample_adaptive_with_tails(pool, plan, f_X, oracle, 4)
        center = sample.region == "center"
        ys = np.asarray(mean_function("m2")(sample.x[center]))
        inner = np.abs(ys) < 12
        share = np.mean(np.abs(sample.x[center][inner]) < 1.2)
        assert share > 0.5
        assert len(sample) == 150
        assert np.all(sample.weight[~center] == 150 / 200_000)

    def test_rejects_small_init(self):
        with pytest.raises(ValueError):
            sample_algorithm2(Uniform(0.0, 1.0), 0.05, 0.95, linear_oracle(), 0, 3, n0_init=3)
