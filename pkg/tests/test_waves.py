import json

import numpy as np
import pytest
from scipy import stats

from mfis.waves import GRAVITY, LonguetHigginsOracle, longuet_higgins_demo, pierson_moskowitz


class TestOracle:
    def test_fft_matches_direct_sum(self):
        o = LonguetHigginsOracle(n_omega=50, key=3)
        rec = o.records([11])[0]
        t = o.times[::97]
        assert np.allclose(rec[::97], o.elevation(11, t), atol=1e-9)

    def test_elevation_in_space(self):
        o = LonguetHigginsOracle(n_omega=5, key=1)
        eps = o.phases([4])[0]
        t, x = 12.5, 30.0
        direct = np.sum(o.amplitude * np.cos(o.omega ** 2 / GRAVITY * x - o.omega * t + eps))
        assert o.elevation(4, np.array([t]), x=x)[0] == pytest.approx(direct, abs=1e-12)

    def test_single_component_max_is_amplitude(self):
        o = LonguetHigginsOracle(n_omega=1, key=0)
        lo = o.lo(np.arange(20))
        assert np.allclose(lo, o.amplitude[0], rtol=1e-3)

    def test_same_seed_same_pair(self):
        o = LonguetHigginsOracle(n_omega=200, key=5)
        a = (o.lo([17, 18]), o.hi([17, 18]))
        b = (o.lo([18, 17])[::-1], o.hi([18, 17])[::-1])
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_dependent_fidelities(self):
        o = LonguetHigginsOracle(n_omega=200, key=0)
        seeds = np.arange(1000)
        rho = stats.spearmanr(o.lo(seeds), o.hi(seeds))[0]
        assert rho > 0

    def test_spectrum_variance(self):
        # the one-sided spectrum integrates to hs^2 / 16
        w = np.linspace(0.05, 20.0, 400_000)
        m0 = np.trapezoid(pierson_moskowitz(w, 5.0, 10.0), w)
        assert m0 == pytest.approx(25.0 / 16, rel=1e-3)

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            LonguetHigginsOracle(n_omega=0)


def test_demo_artifacts(tmp_path):
    res = longuet_higgins_demo(n_omega=50, N0=3000, N=120, r_L=25, r_R=25, exceed=(25, 25),
                               out_dir=tmp_path)
    for name in ("pairs.csv", "scatter.csv", "sample.csv", "density.csv", "spliced.csv",
                 "summary.json"):
        assert (tmp_path / name).exists()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["synthetic"] is True
    assert summary["rank_correlation"] > 0
    assert len(res["sample"]) == 120
