"""Scaled-variance curves and order-statistic threshold diagnostics.

The scaled variance N Var(f_hat(y)) / f(y)^2 is the optimality functional:
a good proposal keeps it flat across y.
"""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from mfis import rng as rngmod
from mfis.distributions import GAUSS_L2_NORM_SQ, quadrature
from mfis.errors import DomainError

SOURCES = ("theory_noiseless", "theory_random", "empirical")


@dataclass
class ScaledVarianceCurve:
    grid: np.ndarray
    values: np.ndarray
    source: str
    reference: str = "true"
    constant: float = 0.0

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)

    @property
    def tag(self):
        if self.source == "empirical":
            return f"empirical:{self.reference}"
        return f"{self.source}:{self.constant:+g}"

    def max_min_ratio(self, mask=None):
        v = self.values if mask is None else self.values[mask]
        v = v[np.isfinite(v)]
        if v.size == 0 or v.min() <= 0:
            return math.inf
        return float(v.max() / v.min())

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("y", "scaled_var", "source"))
        for y, v in zip(self.grid, self.values):
            w.writerow([format(float(y), ".17g"), format(float(v), ".17g"), self.tag])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def theory_scaled_variance_noiseless(branch, g_X, h, y, kernel_l2=GAUSS_L2_NORM_SQ):
    """||K||^2 / h * |m'(x)| / g_X(x) - 1 at x = m^-1(y), small-h limit.

    ``branch`` is a monotone piece with forward, derivative and inverse.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(branch.contains_y(y)):
        raise DomainError("y outside the image of m")
    x = np.asarray(branch.inverse(y), dtype=float)
    gx = np.asarray(g_X(x), dtype=float)
    with np.errstate(divide="ignore"):
        out = kernel_l2 / h * np.abs(branch.derivative(x)) / gx - 1.0
    return float(out) if out.ndim == 0 else out


def homoscedastic_deviation(f_Ytilde, sigma, noise_density, y, breakpoints=()):
    """E f(y - sigma e)^2 / (E f(y - sigma e))^2 by quadrature over e.

    Substituting z = sigma t turns both integrals into expectations over the
    unscaled noise, which stays well posed as sigma goes to zero.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return 1.0
    pts = tuple((y - b) / sigma for b in breakpoints)

    def first(t):
        return f_Ytilde(y - sigma * t) * noise_density(t)

    def second(t):
        return f_Ytilde(y - sigma * t) ** 2 * noise_density(t)

    num = quadrature(second, -math.inf, math.inf, rtol=1e-10, points=pts, center=0.0)
    den = quadrature(first, -math.inf, math.inf, rtol=1e-10, points=pts, center=0.0)
    if den <= 0:
        raise DomainError("f_Y vanishes at y")
    return num / (den * den)


def empirical_scaled_variance(estimates, reference, N, observed=None):
    """Per-point N * sample variance across replications / reference^2.

    ``estimates`` is a list of DensityEstimate on a common grid.
    ``reference`` is a callable density, or None to use the mean estimate.
    Points with zero reference, or not observed by any replication, are
    omitted.
    """
    if len(estimates) < 2:
        raise ValueError("need at least 2 replications")
    grid = np.asarray(estimates[0].grid, dtype=float)
    vals = np.array([np.asarray(e.value, dtype=float) for e in estimates])
    if observed is None:
        observed = np.any([np.asarray(e.in_data_range) for e in estimates], axis=0)
    if reference is None:
        ref = vals.mean(axis=0)
        tag = "mean"
    else:
        ref = np.asarray(reference(grid), dtype=float)
        tag = "true"
    var = vals.var(axis=0, ddof=1)
    keep = observed & (ref > 0)
    out = N * var[keep] / ref[keep] ** 2
    return ScaledVarianceCurve(grid[keep], out, "empirical", reference=tag)


@dataclass(frozen=True)
class BetaRatioLaw:
    """Law of (N0 / (r - 1)) U_{r:N0} with U_{r:N0} ~ Beta(r, N0 + 1 - r)."""

    N0: int
    r: int

    @property
    def mean(self):
        return self.N0 / (self.r - 1) * self.r / (self.N0 + 1)

    @property
    def variance(self):
        n, r = self.N0, self.r
        return (n / (r - 1)) ** 2 * r * (n + 1 - r) / ((n + 1) ** 2 * (n + 2))


def beta_ratio_law(N0, r):
    if r < 2:
        raise ValueError("r must be at least 2")
    if r > N0:
        raise ValueError("r must not exceed N0")
    return BetaRatioLaw(int(N0), int(r))


def simulate_beta_ratio(N0, r, trials, seed, chunk=200):
    """Monte Carlo draws of N0 / (r - 1) times the r-th smallest of N0 uniforms.

    The r-th smallest uniform equals the upper tail probability at the r-th
    largest draw, so this simulates the threshold ratio directly.
    """
    gen = rngmod.generator(int(seed), "beta_ratio")
    out = np.empty(trials)
    for start in range(0, trials, chunk):
        m = min(chunk, trials - start)
        u = gen.random((m, N0))
        out[start:start + m] = np.partition(u, r - 1, axis=1)[:, r - 1]
    return N0 / (r - 1) * out


def tail_prob_relative_variance(N0, r):
    """Approximate Var / tail^2 of the empirical tail probability: 1 / r."""
    if r < 1:
        raise ValueError("r must be at least 1")
    return 1.0 / r
