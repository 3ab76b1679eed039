"""Three-region proposal on the low-fidelity axis and its importance weights.

Below the r_L-th smallest and above the r_R-th largest pool value every pool
entry is promoted; in between, points are drawn from a central density p_X.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from mfis import branches as br
from mfis.distributions import Density1D, TabulatedDensity, quadrature
from mfis.errors import DegenerateError, DomainError

GRID_SIZE = 2048


@dataclass(frozen=True)
class ThresholdPlan:
    x_L: float
    x_R: float
    r_L: int
    r_R: int
    N0: int
    N: int

    def __post_init__(self):
        if not self.x_L < self.x_R:
            raise DegenerateError("degenerate threshold span")
        if not (self.r_L >= 1 and self.r_R >= 1):
            raise ValueError("r_L and r_R must be positive")
        if not self.r_L + self.r_R < self.N <= self.N0:
            raise ValueError("need r_L + r_R < N <= N0")

    @property
    def n_center(self):
        return self.N - self.r_L - self.r_R


def calibrate_thresholds(pool_sorted, r_L, r_R, N):
    """Order-statistic thresholds from an ascending pool of low-fi values."""
    pool_sorted = np.asarray(pool_sorted, dtype=float)
    N0 = pool_sorted.size
    if N0 <= r_L + r_R:
        raise ValueError("pool smaller than r_L + r_R")
    if N <= r_L + r_R:
        raise ValueError("N must exceed r_L + r_R")
    x_L = float(pool_sorted[r_L - 1])
    x_R = float(pool_sorted[N0 - r_R])
    if not x_L < x_R:
        raise DegenerateError("degenerate threshold span")
    return ThresholdPlan(x_L, x_R, int(r_L), int(r_R), int(N0), int(N))


@dataclass(frozen=True)
class BoxCoxTransform:
    p: float

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("Box-Cox power must be nonnegative")

    def _check(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise DomainError("transform domain")
        return y

    def __call__(self, y):
        y = self._check(y)
        if self.p == 0:
            return np.log(y)
        return (y ** self.p - 1.0) / self.p

    def derivative(self, y):
        y = self._check(y)
        return y ** (self.p - 1.0)

    def log_derivative(self, y):
        return (self.p - 1.0) * np.log(self._check(y))

    def inverse(self, z):
        z = np.asarray(z, dtype=float)
        if self.p == 0:
            return np.exp(z)
        return (self.p * z + 1.0) ** (1.0 / self.p)


@dataclass(frozen=True)
class ProposalSpec:
    """Calibrated proposal g_X with masses (c_L, c_0, c_R)."""

    plan: ThresholdPlan
    p_X: Density1D
    c_L: Fraction
    c_R: Fraction
    tail_prob_L: Fraction
    tail_prob_R: Fraction

    @property
    def c_0(self):
        return 1 - self.c_L - self.c_R

    @property
    def tail_weight_L(self):
        return float(self.tail_prob_L / self.c_L)

    @property
    def tail_weight_R(self):
        return float(self.tail_prob_R / self.c_R)

    def region(self, x):
        """0 = left tail, 1 = center, 2 = right tail."""
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.plan.x_L, 0, np.where(x >= self.plan.x_R, 2, 1))


def build_proposal(plan, p_X, c_L=None, c_R=None):
    """Proposal with masses calibrated to the pool (c = r/N by default)."""
    cL = Fraction(plan.r_L, plan.N) if c_L is None else Fraction(c_L)
    cR = Fraction(plan.r_R, plan.N) if c_R is None else Fraction(c_R)
    if not (0 < cL < 1 and 0 < cR < 1 and cL + cR < 1):
        raise ValueError("masses must lie in (0, 1) and sum below 1")
    spec = ProposalSpec(plan, p_X, cL, cR,
                        Fraction(plan.r_L, plan.N0), Fraction(plan.r_R, plan.N0))
    return spec


def weight(spec, f_X, x):
    """Importance weight f_X / g_X at low-fidelity value(s) x."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    region = spec.region(x)
    w = np.empty(x.shape)
    w[region == 0] = spec.tail_weight_L
    w[region == 2] = spec.tail_weight_R
    inner = region == 1
    if np.any(inner):
        px = spec.p_X.eval(x[inner])
        if np.any(px <= 0):
            raise DomainError("proposal support hole")
        w[inner] = f_X.eval(x[inner]) / (float(spec.c_0) * px)
    return float(w[0]) if scalar else w


class ProposalDensity(Density1D):
    """Full-line g_X; tails use f_X conditioned on each tail region."""

    def __init__(self, spec, f_X):
        self.spec = spec
        self.f_X = f_X
        x_L, x_R = spec.plan.x_L, spec.plan.x_R
        self._mass_L = _cond_mass(f_X, -math.inf, x_L)
        self._mass_R = _cond_mass(f_X, x_R, math.inf)

    def breakpoints(self):
        return (self.spec.plan.x_L, self.spec.plan.x_R) + tuple(self.f_X.breakpoints())

    def log_eval(self, x):
        x = np.asarray(x, dtype=float)
        s = self.spec
        region = s.region(x)
        lf = self.f_X.log_eval(x)
        with np.errstate(divide="ignore"):
            left = math.log(float(s.c_L)) + lf - math.log(self._mass_L)
            right = math.log(float(s.c_R)) + lf - math.log(self._mass_R)
            mid = math.log(float(s.c_0)) + s.p_X.log_eval(x)
        return np.where(region == 0, left, np.where(region == 2, right, mid))

    def _center(self):
        return 0.5 * (self.spec.plan.x_L + self.spec.plan.x_R)


def _cond_mass(f_X, a, b):
    if hasattr(f_X, "cdf"):
        if math.isinf(a):
            return float(f_X.cdf(b))
        return float(f_X.sf(a))
    return quadrature(f_X.eval, a, b, points=f_X.breakpoints())


# ------------------------------------------------------- optimal proposals


def uniform_p(x_L, x_R):
    width = x_R - x_L
    return TabulatedDensity(lambda x: np.ones(np.shape(x)), x_L, x_R,
                            n_grid=GRID_SIZE, normalizer=1.0 / width)


def _check_monotone(values):
    s = np.sign(values)
    nz = s[s != 0]
    if nz.size == 0 or np.any(nz != nz[0]):
        raise DomainError("not strictly monotone")
    zero = s == 0
    if np.any(zero[1:] & zero[:-1]):
        raise DomainError("not strictly monotone")


def optimal_p_monotone(m, m_prime, x_L, x_R, n_grid=GRID_SIZE):
    """Central density |m'(x)| / |m(x_R) - m(x_L)| for strictly monotone m."""
    grid = np.linspace(x_L, x_R, n_grid)
    _check_monotone(np.asarray(m_prime(grid), dtype=float))
    span = abs(float(m(x_R)) - float(m(x_L)))
    if span == 0:
        raise DomainError("not strictly monotone")
    return TabulatedDensity(lambda x: np.abs(m_prime(x)), x_L, x_R,
                            n_grid=n_grid, normalizer=1.0 / span)


def optimal_p_piecewise(branches, f_X, x_L, x_R, n_grid=GRID_SIZE):
    """Central density proportional to f_X(x) / f_Ytilde(m(x)).

    Only branches inside (x_L, x_R) contribute to the image density.
    ``branches`` may also be a fitted piecewise linear model.
    """
    if hasattr(branches, "branches"):
        branches = branches.branches()
    branches = [b for b in branches if b.hi > x_L and b.lo < x_R]
    if not branches:
        raise DomainError("no monotone branch inside the central range")

    def func(x):
        x = np.asarray(x, dtype=float)
        y = br.evaluate(branches, x)
        dens = br.image_density(branches, f_X, y)
        fx = f_X.eval(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(np.isinf(dens), 0.0, fx / dens)
        return out

    probe = func(np.linspace(x_L, x_R, n_grid)[1:-1])
    if np.any(~np.isfinite(probe)):
        raise DomainError("image density vanishes")
    nodes = [n for n in br.jump_nodes(branches) if x_L < n < x_R]
    return TabulatedDensity(func, x_L, x_R, n_grid=n_grid, extra_nodes=nodes,
                            method="gauss")


def optimal_p_boxcox(m, m_prime, p, x_L, x_R, n_grid=GRID_SIZE):
    """Central density proportional to |m'(x)| m(x)^(p - 1)."""
    if not 0 <= p <= 1:
        raise ValueError("Box-Cox power must lie in [0, 1]")
    grid = np.linspace(x_L, x_R, n_grid)
    if np.any(np.asarray(m(grid), dtype=float) <= 0):
        raise DomainError("Box-Cox requires positive mean")
    _check_monotone(np.asarray(m_prime(grid), dtype=float))

    def func(x):
        return np.abs(m_prime(x)) * np.asarray(m(x), dtype=float) ** (p - 1.0)

    return TabulatedDensity(func, x_L, x_R, n_grid=n_grid)
