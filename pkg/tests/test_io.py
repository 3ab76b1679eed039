import numpy as np
import pytest

from mfis.errors import DomainError
from mfis.io import MissingHighFidelity, ingest_pairs, write_pairs


def write(tmp_path, text, name="pairs.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestIngest:
    def test_three_rows_two_y(self, tmp_path):
        pool, oracle = ingest_pairs(write(tmp_path, "seed,x,y\n1,0.5,2.0\n2,0.1,\n3,0.9,4.5\n"))
        assert len(pool) == 3
        assert oracle.served == [1, 3]
        assert list(oracle.hi([3, 1])) == [4.5, 2.0]
        with pytest.raises(MissingHighFidelity) as info:
            oracle.hi([1, 2])
        assert info.value.seeds == [2]

    def test_duplicate_seed_named(self, tmp_path):
        with pytest.raises(ValueError, match="duplicate seed 7"):
            ingest_pairs(write(tmp_path, "seed,x\n7,0.1\n7,0.2\n"))

    @pytest.mark.parametrize("text", ["seed,x\n1,abc\n", "seed,x\nq,1.0\n", "seed,x,y\n1,1.0,z\n"])
    def test_non_numeric(self, tmp_path, text):
        with pytest.raises(ValueError, match="non-numeric"):
            ingest_pairs(write(tmp_path, text))

    @pytest.mark.parametrize("text", ["", "x,seed\n1,2\n", "seed,x\n", "seed,x\n1,inf\n"])
    def test_bad_files(self, tmp_path, text):
        with pytest.raises(ValueError):
            ingest_pairs(write(tmp_path, text))

    def test_unknown_seed_lo(self, tmp_path):
        _, oracle = ingest_pairs(write(tmp_path, "seed,x\n1,0.5\n"))
        with pytest.raises(DomainError):
            oracle.lo([2])

    def test_large_round_trip(self, tmp_path):
        g = np.random.default_rng(0)
        n = 100_000
        seeds = g.permutation(10 * n)[:n]
        x = g.standard_t(3, n) * 1e3
        y = np.where(g.random(n) < 0.5, np.nan, g.normal(size=n) / 7)
        path = tmp_path / "big.csv"
        write_pairs(path, seeds, x, y)
        pool, oracle = ingest_pairs(path)
        assert np.array_equal(pool.seeds, seeds)
        assert np.array_equal(pool.x, x)
        has = ~np.isnan(y)
        assert np.array_equal(oracle.hi(seeds[has]), y[has])
        # ingest -> emit -> ingest is idempotent
        path2 = tmp_path / "again.csv"
        write_pairs(path2, pool.seeds, pool.x, np.array([oracle._y.get(int(s), np.nan)
                                                         for s in pool.seeds]))
        assert path2.read_text() == path.read_text()
