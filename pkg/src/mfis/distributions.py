"""Densities, the Gaussian kernel, GPD helpers and quadrature.

Densities evaluate in log space; ``eval`` exponentiates on demand so that
far-tail values stay representable.
"""

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, stats
from scipy.special import ndtr, ndtri

from mfis.errors import DomainError, QuadratureError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
GAUSS_L2_NORM_SQ = 1.0 / (2.0 * math.sqrt(math.pi))
XI_ZERO_TOL = 1e-9


class EmptySampleWarning(UserWarning):
    pass


class Density1D:
    """One-dimensional density with log-space evaluation."""

    support = (-math.inf, math.inf)

    def log_eval(self, x):
        raise NotImplementedError

    def eval(self, x):
        return np.exp(self.log_eval(x))

    def __call__(self, x):
        return self.eval(x)

    def breakpoints(self):
        """Interior points where the density is not smooth."""
        return ()

    def integral(self):
        a, b = self.support
        return quadrature(self.eval, a, b, points=self.breakpoints(),
                          center=self._center())

    def _center(self):
        a, b = self.support
        if math.isfinite(a) and math.isfinite(b):
            return 0.5 * (a + b)
        if math.isfinite(a):
            return a
        if math.isfinite(b):
            return b
        return 0.0


class Normal(Density1D):
    def __init__(self, mu=0.0, sigma=1.0):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.mu = float(mu)
        self.sigma = float(sigma)

    def __repr__(self):
        return f"Normal(mu={self.mu}, sigma={self.sigma})"

    def log_eval(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return -0.5 * z * z - LOG_SQRT_2PI - math.log(self.sigma)

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    def sf(self, x):
        return ndtr((self.mu - np.asarray(x, dtype=float)) / self.sigma)

    def ppf(self, u):
        return self.mu + self.sigma * ndtri(u)

    def _center(self):
        return self.mu


class Uniform(Density1D):
    def __init__(self, a, b):
        if not b > a:
            raise ValueError("need a < b")
        self.a = float(a)
        self.b = float(b)
        self.support = (self.a, self.b)

    def log_eval(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.a) & (x <= self.b)
        return np.where(inside, -math.log(self.b - self.a), -np.inf)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def ppf(self, u):
        return self.a + (self.b - self.a) * np.asarray(u, dtype=float)


class HeavyTailedFX(Density1D):
    """Gaussian core on (-4, 4] with exponential tails exp(-|x|/2 - 6).

    The pieces meet continuously at x = +-4 since exp(-8) appears on both
    sides.
    """

    def _unnormalized(self, x):
        return np.exp(self._log_unnormalized(x))

    @staticmethod
    def _log_unnormalized(x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= -4.0, 0.5 * x - 6.0,
                        np.where(x <= 4.0, -0.5 * x * x, -0.5 * x - 6.0))

    @cached_property
    def normalizer(self):
        total = quadrature(self._unnormalized, -math.inf, math.inf,
                           points=(-4.0, 4.0))
        return 1.0 / total

    def breakpoints(self):
        return (-4.0, 4.0)

    def log_eval(self, x):
        return self._log_unnormalized(x) + math.log(self.normalizer)

    def _left_mass(self):
        return 2.0 * self.normalizer * math.exp(-8.0)

    def _tail(self, x):
        # mass beyond |x| for |x| >= 4
        return 2.0 * self.normalizer * np.exp(-0.5 * np.maximum(np.abs(x), 4.0) - 6.0)

    def _core(self, x):
        # mass of (-4, min(x, 4)]
        return self.normalizer * math.sqrt(2 * math.pi) * (
            ndtr(np.clip(x, -4.0, 4.0)) - ndtr(-4.0))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        mid = self._left_mass() + self._core(x)
        return np.where(x <= -4.0, self._tail(x),
                        np.where(x <= 4.0, mid, 1.0 - self._tail(x)))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        mid = self._left_mass() + self._core(-x)
        return np.where(x >= 4.0, self._tail(x),
                        np.where(x >= -4.0, mid, 1.0 - self._tail(x)))

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        C = self.normalizer
        pl = self._left_mass()
        s2p = C * math.sqrt(2 * math.pi)
        left = 2.0 * (np.log(np.maximum(u, 1e-300) / (2.0 * C)) + 6.0)
        right = -2.0 * (np.log(np.maximum(1.0 - u, 1e-300) / (2.0 * C)) + 6.0)
        inner = np.clip((u - pl) / s2p + ndtr(-4.0), 1e-300, 1.0 - 1e-16)
        mid = ndtri(inner)
        return np.where(u <= pl, left, np.where(u < 1.0 - pl, mid, right))


@dataclass(frozen=True)
class GaussianKernel:
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("bandwidth must be positive")

    l2_norm_sq = GAUSS_L2_NORM_SQ

    def __call__(self, u):
        z = np.asarray(u, dtype=float) / self.h
        return np.exp(-0.5 * z * z - LOG_SQRT_2PI) / self.h


# --------------------------------------------------------------------- GPD


@dataclass(frozen=True)
class GpdParams:
    xi: float
    beta: float
    threshold: float = 0.0
    side: str = "right"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("GPD scale must be positive")
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")

    @property
    def upper_endpoint(self):
        """Largest exceedance in the support (inf unless xi < 0)."""
        if self.xi < -XI_ZERO_TOL:
            return -self.beta / self.xi
        return math.inf


def gpd_logpdf(xi, beta, u):
    """Vectorized GPD log-density; -inf outside the support."""
    u = np.asarray(u, dtype=float)
    out = np.full(u.shape, -np.inf)
    if abs(xi) < XI_ZERO_TOL:
        ok = u >= 0
        out[ok] = -math.log(beta) - u[ok] / beta
        return out
    s = xi * u / beta
    ok = (u >= 0) & (s > -1.0)
    out[ok] = -math.log(beta) - (1.0 / xi + 1.0) * np.log1p(s[ok])
    return out


def gpd_pdf(params, u):
    """GPD density at exceedance ``u``; raises outside the support."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0) or np.any(u_arr > params.upper_endpoint):
        raise DomainError("exceedance outside GPD support")
    val = np.exp(gpd_logpdf(params.xi, params.beta, u_arr))
    return float(val) if val.ndim == 0 else val


def gpd_tail_prob(params, u):
    """P(U > u) for the GPD; zero beyond a finite upper endpoint."""
    u = np.maximum(np.asarray(u, dtype=float), 0.0)
    xi, beta = params.xi, params.beta
    if abs(xi) < XI_ZERO_TOL:
        val = np.exp(-u / beta)
    else:
        s = xi * u / beta
        inside = s > -1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(inside, np.exp(-np.log1p(np.where(inside, s, 0.0)) / xi), 0.0)
    return float(val) if val.ndim == 0 else val


class GpdDensity(Density1D):
    """GPD placed at ``params.threshold`` and opening towards ``params.side``."""

    def __init__(self, params):
        self.params = params
        t = params.threshold
        end = params.upper_endpoint
        if params.side == "right":
            self.support = (t, t + end)
        else:
            self.support = (t - end, t)

    def exceedance(self, y):
        y = np.asarray(y, dtype=float)
        if self.params.side == "right":
            return y - self.params.threshold
        return self.params.threshold - y

    def log_eval(self, y):
        return gpd_logpdf(self.params.xi, self.params.beta, self.exceedance(y))


# --------------------------------------------------------------- tabulated


class TabulatedDensity(Density1D):
    """Density on (a, b) proportional to a given function.

    Point evaluation uses the exact function times a normalizer (supplied, or
    computed by adaptive quadrature with the extra nodes as breakpoints). The
    function is also tabulated on a uniform grid merged with the extra nodes;
    the trapezoid-normalized table drives inverse-CDF sampling.
    """

    def __init__(self, func, a, b, n_grid=2048, extra_nodes=(), normalizer=None,
                 method="adaptive"):
        if not b > a:
            raise ValueError("need a < b")
        self.func = func
        self.a = float(a)
        self.b = float(b)
        self.support = (self.a, self.b)
        nodes = np.linspace(self.a, self.b, n_grid)
        extra = sorted({float(e) for e in extra_nodes if self.a < e < self.b})
        if extra:
            nodes = np.unique(np.concatenate([nodes, extra]))
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.asarray(func(nodes), dtype=float)
        if vals.shape != nodes.shape or not np.all(np.isfinite(vals)):
            raise DomainError("proposal function not finite on its range")
        if np.any(vals < 0):
            raise DomainError("proposal function negative")
        cells = 0.5 * (vals[1:] + vals[:-1]) * np.diff(nodes)
        z = cells.sum()
        if not z > 0:
            raise DomainError("proposal function has zero mass")
        if normalizer is None and method == "gauss":
            mass = gauss_panels(self._raw, [self.a, *extra, self.b])
            normalizer = 1.0 / mass
        elif normalizer is None:
            mass = quadrature(lambda t: self._raw(t), self.a, self.b,
                              rtol=1e-11, points=extra)
            normalizer = 1.0 / mass
        self.normalizer = float(normalizer)
        self.grid = nodes
        self.grid_pdf = vals / z
        cdf = np.concatenate([[0.0], np.cumsum(cells)]) / z
        cdf[-1] = 1.0
        self.grid_cdf = cdf
        self._extra = tuple(extra)

    def _raw(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.asarray(self.func(x), dtype=float)

    def breakpoints(self):
        return self._extra

    def log_eval(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.a) & (x <= self.b)
        raw = self._raw(np.clip(x, self.a, self.b)) * self.normalizer
        with np.errstate(divide="ignore"):
            val = np.log(raw)
        return np.where(inside, val, -np.inf)

    def min_on_grid(self):
        return float(self.grid_pdf.min())


class SampleKDE(Density1D):
    """Gaussian KDE of raw draws, for a nominal density known only by a pool.

    ``h`` is the bandwidth in data units; None uses Silverman's rule.
    """

    def __init__(self, x, h=None):
        x = np.asarray(x, dtype=float)
        if x.size < 2 or np.ptp(x) == 0:
            raise ValueError("need at least two distinct draws")
        if h is not None and not h > 0:
            raise ValueError("bandwidth must be positive")
        bw = "silverman" if h is None else h / x.std(ddof=1)
        self._kde = stats.gaussian_kde(x, bw_method=bw)
        self.h = float(math.sqrt(self._kde.covariance[0, 0]))

    def log_eval(self, x):
        x = np.asarray(x, dtype=float)
        return self._kde.logpdf(x.reshape(-1)).reshape(x.shape)


# ---------------------------------------------------------------- kernels


def kernel_density(points, h, y, n_divisor):
    """Weighted Gaussian kernel sum (1/n) sum_i K_h(y - Y_i) w_i at scalar y."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    pts = list(points)
    if not pts:
        warnings.warn("kernel_density called with no points", EmptySampleWarning)
        return 0.0
    if n_divisor < len(pts):
        raise ValueError("n_divisor smaller than number of points")
    vals = np.array([p[0] for p in pts], dtype=float)
    wts = np.array([p[1] for p in pts], dtype=float)
    if np.any(wts < 0):
        raise ValueError("weights must be nonnegative")
    return float(np.sum(GaussianKernel(h)(y - vals) * wts) / n_divisor)


# ------------------------------------------------------------- quadrature


def gauss_panels(f, cuts, panels=16, order=24):
    """Composite Gauss-Legendre integral of a vectorized f over cut segments.

    Suited to integrands that are smooth between the given cuts; one batched
    call of ``f`` replaces many scalar adaptive evaluations.
    """
    t, w = np.polynomial.legendre.leggauss(order)
    cuts = np.asarray(sorted(set(float(c) for c in cuts)))
    edges = np.concatenate([np.linspace(l, r, panels + 1)[:-1]
                            for l, r in zip(cuts[:-1], cuts[1:])] + [cuts[-1:]])
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = mid[:, None] + half[:, None] * t[None, :]
    vals = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    total = float(np.sum(half[:, None] * w[None, :] * vals))
    if not math.isfinite(total):
        raise QuadratureError("non-finite integral", estimate=total)
    return total


def _envelope_limit(f, start, direction, scale, peak0, tol=1e-12, max_doublings=80):
    """Walk outwards from ``start`` until |f| drops below tol * peak."""
    nodes = [start]
    peak = max(peak0, abs(float(f(start))))
    step = scale
    x = start
    for _ in range(max_doublings):
        x = start + direction * step
        fx = abs(float(f(x)))
        nodes.append(x)
        peak = max(peak, fx)
        if peak > 0 and fx < tol * peak:
            break
        if peak == 0 and step > 1e6 * scale:
            # identically zero as far as the walk can see
            break
        step *= 2.0
    else:
        raise QuadratureError("integrand envelope does not decay")
    return nodes, peak


def quadrature(f, a, b, rtol=1e-8, points=(), center=None, scale=1.0):
    """Adaptive Gauss-Kronrod integral of ``f`` over (a, b).

    Infinite ends are truncated where the integrand falls below 1e-12 of the
    largest value seen while walking outwards (step doubling from ``center``).
    """
    if a == b:
        return 0.0
    if a > b:
        return -quadrature(f, b, a, rtol, points, center, scale)
    if center is None:
        if math.isfinite(a) and math.isfinite(b):
            center = 0.5 * (a + b)
        elif math.isfinite(a):
            center = a
        elif math.isfinite(b):
            center = b
        else:
            center = 0.0

    def f_scalar(x):
        return np.asarray(f(x), dtype=float).item()

    nodes = {float(p) for p in points if a < p < b}
    lo, hi = a, b
    peak = abs(f_scalar(center)) if a <= center <= b else 0.0
    for p in nodes:
        peak = max(peak, abs(f_scalar(p)))
    if not math.isfinite(b):
        start = max(center, max(nodes, default=center), a if math.isfinite(a) else -math.inf)
        walk, peak = _envelope_limit(f_scalar, start, +1.0, scale, peak)
        nodes.update(walk)
        hi = walk[-1]
    if not math.isfinite(a):
        start = min(center, min(nodes, default=center), b if math.isfinite(b) else math.inf)
        walk, peak = _envelope_limit(f_scalar, start, -1.0, scale, peak)
        nodes.update(walk)
        lo = walk[-1]
    cuts = sorted({lo, hi} | {p for p in nodes if lo < p < hi})
    total = 0.0
    err = 0.0
    for left, right in zip(cuts[:-1], cuts[1:]):
        val, e, info = integrate.quad(f_scalar, left, right, epsabs=0.0,
                                      epsrel=max(rtol * 0.1, 1e-13), limit=400,
                                      full_output=1)[:3]
        total += val
        err += e
    if not math.isfinite(total):
        raise QuadratureError("non-finite integral", estimate=total)
    if err > max(rtol * abs(total), 1e-300) and err > 1e-14:
        raise QuadratureError(
            f"quadrature tolerance not met (err={err:.3g})", estimate=total)
    return total
