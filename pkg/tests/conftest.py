import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_force_kde(y, w, n_divisor, h, grid):
    """Textbook weighted Gaussian KDE by an explicit double loop."""
    out = np.zeros(len(grid))
    for i, g in enumerate(grid):
        s = 0.0
        for yj, wj in zip(y, w):
            z = (g - yj) / h
            s += wj * np.exp(-0.5 * z * z) / (h * np.sqrt(2 * np.pi))
        out[i] = s / n_divisor
    return out
