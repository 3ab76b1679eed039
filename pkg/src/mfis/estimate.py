"""Importance-weighted density estimates of the high-fidelity output.

The core is a weighted Gaussian KDE with its plug-in variance. Beyond a pair
of order-statistic thresholds the KDE is replaced by weighted-MLE generalized
Pareto tails scaled by the weighted exceedance mass.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from mfis import _kernels
from mfis import rng as rngmod
from mfis.distributions import LOG_SQRT_2PI, XI_ZERO_TOL, GpdParams, gpd_logpdf
from mfis.errors import BoundaryShapeError, DegenerateError, DomainError
from mfis.proposal import BoxCoxTransform

XI_MIN = -0.5
XI_BOUNDARY_MARGIN = 1e-3
MIN_EXCEEDANCES = 5
CSV_HEADER = ("y", "fhat", "log_fhat", "var", "in_range", "ci_low", "ci_high", "region")


def fmt(v):
    return format(float(v), ".17g")


@dataclass
class DensityEstimate:
    grid: np.ndarray
    value: np.ndarray
    variance: np.ndarray
    in_data_range: np.ndarray
    ci_low: np.ndarray = None
    ci_high: np.ndarray = None
    region: np.ndarray = None
    clamp_count: int = 0
    h: float = None

    def __post_init__(self):
        n = len(self.grid)
        if self.region is None:
            self.region = np.array(["core"] * n, dtype=object)

    def log_value(self):
        with np.errstate(divide="ignore"):
            return np.log(self.value)

    def with_band(self, low, high):
        return DensityEstimate(self.grid, self.value, self.variance,
                               self.in_data_range, low, high, self.region,
                               self.clamp_count, self.h)

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        logf = self.log_value()
        n = len(self.grid)
        lo = self.ci_low if self.ci_low is not None else np.full(n, np.nan)
        hi = self.ci_high if self.ci_high is not None else np.full(n, np.nan)
        for i in range(n):
            w.writerow([fmt(self.grid[i]), fmt(self.value[i]), fmt(logf[i]),
                        fmt(self.variance[i]), int(bool(self.in_data_range[i])),
                        fmt(lo[i]), fmt(hi[i]), self.region[i]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ValueError(f"expected header {','.join(CSV_HEADER)}")
        body = rows[1:]
        col = lambda j: np.array([float(r[j]) for r in body])
        return cls(col(0), col(1), col(3), np.array([r[4] == "1" for r in body]),
                   col(5), col(6), np.array([r[7] for r in body], dtype=object))


# ----------------------------------------------------------------- KDE


def kde_arrays(y, w, n_divisor, h, grid):
    """Weighted KDE and plug-in variance from raw arrays.

    Returns (value, variance, clamp_count). The variance plug-in
    (1/N)[(1/N) sum K^2 w^2 - fhat^2] is clamped at zero.
    """
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.size == 0:
        raise DegenerateError("empty sample")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    grid = np.asarray(grid, dtype=float)
    n = float(n_divisor)
    s1, s2 = _kernels.kde_log_sums(grid, y, w, h)
    log_norm = math.log(h) + LOG_SQRT_2PI
    value = np.exp(s1 - log_norm) / n
    second = np.exp(s2 - 2.0 * log_norm) / n
    raw = (second - value * value) / n
    clamp = int(np.count_nonzero(raw < 0))
    return value, np.maximum(raw, 0.0), clamp


def weighted_kde(sample, h, grid):
    """(1/N) sum K_h(y - Y_i) w_i on ``grid`` with N the sample's divisor."""
    if len(sample) == 0:
        raise DegenerateError("empty sample")
    grid = np.asarray(grid, dtype=float)
    value, var, clamp = kde_arrays(sample.y, sample.weight, sample.n_divisor, h, grid)
    in_range = (grid >= sample.y.min()) & (grid <= sample.y.max())
    return DensityEstimate(grid, value, var, in_range, clamp_count=clamp, h=float(h))


def kde_mass(y, w, n_divisor, h, a, b):
    """Integral of the weighted KDE over (a, b), in closed form."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    pa = special.ndtr((a - y) / h) if math.isfinite(a) else np.zeros_like(y)
    pb = special.ndtr((b - y) / h) if math.isfinite(b) else np.ones_like(y)
    return float(np.sum(w * (pb - pa)) / n_divisor)


# ----------------------------------------------------------------- GPD


def smith_covariance(xi, beta, r):
    """Asymptotic covariance of (xi_hat, beta_hat) from r exceedances."""
    return (1.0 + xi) * np.array([[1.0 + xi, -beta], [-beta, 2.0 * beta * beta]]) / r


@dataclass
class GpdFit:
    params: GpdParams
    exceed_mass: float
    exceed_var: float
    n_exceed: int
    weighted: bool
    cov: np.ndarray

    def density(self, y):
        """exceed_mass * g(u) with u the exceedance of y over the threshold."""
        y = np.asarray(y, dtype=float)
        p = self.params
        u = y - p.threshold if p.side == "right" else p.threshold - y
        val = self.exceed_mass * np.exp(gpd_logpdf(p.xi, p.beta, u))
        return float(val) if val.ndim == 0 else val


def _neg_loglik(theta, u, w):
    beta = math.exp(theta[0])
    xi = theta[1]
    if xi <= XI_MIN:
        return math.inf
    ll = gpd_logpdf(xi, beta, u)
    if not np.all(np.isfinite(ll)):
        return math.inf
    return -float(np.dot(w, ll))


def _neg_loglik_grad(theta, u, w):
    """Gradient of the negative weighted log-likelihood in (log beta, xi)."""
    beta = math.exp(theta[0])
    xi = theta[1]
    a = u / beta
    t = 1.0 + xi * a
    if xi <= XI_MIN or np.any(t <= 0):
        return np.zeros(2)
    d_logbeta = -1.0 + (1.0 + xi) * a / t
    if abs(xi) < 1e-5:
        d_xi = 0.5 * a * a - a + xi * (a * a - 2.0 * a ** 3 / 3.0)
    else:
        d_xi = np.log1p(xi * a) / (xi * xi) - (1.0 / xi + 1.0) * a / t
    return -np.array([np.dot(w, d_logbeta), np.dot(w, d_xi)])


def _newton_polish(theta, u, w, steps=8, eps=1e-6):
    """Newton steps on the score so the optimum does not depend on simplex history."""
    g = _neg_loglik_grad(theta, u, w)
    for _ in range(steps):
        H = np.empty((2, 2))
        for j in range(2):
            d = np.zeros(2)
            d[j] = eps
            H[:, j] = (_neg_loglik_grad(theta + d, u, w)
                       - _neg_loglik_grad(theta - d, u, w)) / (2 * eps)
        try:
            step = np.linalg.solve(0.5 * (H + H.T), g)
        except np.linalg.LinAlgError:
            break
        trial = theta - step
        g_new = _neg_loglik_grad(trial, u, w)
        if not math.isfinite(_neg_loglik(trial, u, w)) or not (
                np.linalg.norm(g_new) < np.linalg.norm(g)):
            break
        theta, g = trial, g_new
    return theta


def fit_gpd_weighted(u, w=None, side="right", threshold=0.0, exceed_mass=1.0,
                     exceed_var=0.0):
    """Weighted maximum likelihood GPD fit to exceedances ``u`` > 0.

    Maximizes sum w_i log g(u_i) over (log beta, xi) by Nelder-Mead with a
    support penalty. Weights are divided by their mean first, so a common
    rescaling leaves the optimizer path unchanged.
    """
    u = np.asarray(u, dtype=float)
    weighted = w is not None
    w = np.ones_like(u) if w is None else np.asarray(w, dtype=float)
    if u.size < MIN_EXCEEDANCES:
        raise DegenerateError(f"need at least {MIN_EXCEEDANCES} exceedances")
    if np.any(u <= 0):
        raise DomainError("exceedances must be positive")
    if np.any(w <= 0) or w.shape != u.shape:
        raise ValueError("weights must be positive and match exceedances")
    if np.ptp(u) <= 1e-12 * u.max():
        raise DegenerateError("degenerate exceedances")
    w = w / w.mean()
    beta0 = float(np.dot(w, u) / w.sum())
    best = None
    for xi0 in (0.1, -0.2, 0.5):
        start = np.array([math.log(beta0), xi0])
        if not math.isfinite(_neg_loglik(start, u, w)):
            start[1] = 0.0
        res = optimize.minimize(_neg_loglik, start, args=(u, w), method="Nelder-Mead",
                                options={"xatol": 1e-11, "fatol": 1e-13,
                                         "maxiter": 5000, "maxfev": 10000})
        # restart from the optimum to shake off a collapsed simplex
        res = optimize.minimize(_neg_loglik, res.x, args=(u, w), method="Nelder-Mead",
                                options={"xatol": 1e-11, "fatol": 1e-13,
                                         "maxiter": 5000, "maxfev": 10000})
        if best is None or res.fun < best.fun - 1e-12 * abs(best.fun):
            best = res
        if xi0 == 0.1 and best.x[1] > XI_MIN + 0.1:
            break
    if not math.isfinite(best.fun):
        raise DegenerateError("degenerate exceedances")
    theta = best.x
    theta = _newton_polish(theta, u, w)
    beta, xi = math.exp(theta[0]), float(theta[1])
    if xi < XI_MIN + XI_BOUNDARY_MARGIN:
        raise BoundaryShapeError(
            f"{side} GPD shape estimate at the -1/2 boundary; choose a different threshold",
            side)
    params = GpdParams(xi, beta, threshold, side)
    return GpdFit(params, float(exceed_mass), float(exceed_var), int(u.size),
                  weighted, smith_covariance(xi, beta, u.size))


def exceed_mass(sample, threshold, side):
    """Weighted exceedance probability and its plug-in variance.

    Returns (c, variance, zero_flag); right side counts Y >= threshold, left
    side counts Y <= threshold.
    """
    y, w = sample.y, sample.weight
    if side == "right":
        ind = y >= threshold
    elif side == "left":
        ind = y <= threshold
    else:
        raise ValueError("side must be 'left' or 'right'")
    n = float(sample.n_divisor)
    c = float(np.sum(w[ind]) / n)
    second = float(np.sum(w[ind] ** 2) / n)
    var = max((second - c * c) / n, 0.0)
    return c, var, not np.any(ind)


def gpd_thresholds(y, n_left, n_right):
    """(y_L, y_R) as the n_left-th smallest and n_right-th largest of y."""
    ys = np.sort(np.asarray(y, dtype=float))
    if n_left < 1 or n_right < 1 or n_left + n_right > ys.size:
        raise ValueError("exceedance counts do not fit the sample")
    return float(ys[n_left - 1]), float(ys[ys.size - n_right])


def fit_tail(sample, threshold, side):
    """GPD fit to the sample points strictly beyond ``threshold``.

    Returns None when nothing reaches the threshold (zero tail mass).
    """
    c, var, empty = exceed_mass(sample, threshold, side)
    if empty:
        return None
    if side == "right":
        sel = sample.y > threshold
        u = sample.y[sel] - threshold
    else:
        sel = sample.y < threshold
        u = threshold - sample.y[sel]
    return fit_gpd_weighted(u, sample.weight[sel], side=side, threshold=threshold,
                            exceed_mass=c, exceed_var=var)


def fit_tail_by_count(sample, n, side, max_shift=0, step=5):
    """Tail fit with the threshold at the n-th most extreme Y.

    When the shape estimate lands on the -1/2 boundary the count is moved
    by +step, -step, +2 step, ... up to ``max_shift`` and the first count
    that fits is kept. Returns (count, threshold, fit); re-raises the
    boundary error once the search is exhausted.
    """
    size = len(sample.y)
    counts = [n]
    for k in range(step, max_shift + 1, step):
        counts += [n + k, n - k]
    counts = [c for c in counts if MIN_EXCEEDANCES < c < size]
    ys = np.sort(sample.y)
    first = None
    for c in counts:
        threshold = float(ys[c - 1] if side == "left" else ys[size - c])
        try:
            return c, threshold, fit_tail(sample, threshold, side)
        except BoundaryShapeError as exc:
            first = first or exc
    if first is None:
        raise ValueError("exceedance counts do not fit the sample")
    raise first


# ------------------------------------------------------------- splicing


@dataclass
class SplicedDensity:
    """KDE between y_L and y_R, GPD tails beyond, optional global rescale."""

    core_y: np.ndarray
    core_w: np.ndarray
    n_divisor: int
    h: float
    y_L: float
    y_R: float
    left: GpdFit
    right: GpdFit
    renormalized: bool = False
    factor: float = 1.0
    clamp_count: int = field(default=0, compare=False)
    counts: tuple = None
    band_gaps: int = field(default=0, compare=False)

    def eval(self, y):
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        y = np.atleast_1d(y)
        out = np.empty(y.shape)
        right = y >= self.y_R
        left = y <= self.y_L
        mid = ~(right | left)
        if np.any(mid):
            out[mid] = kde_arrays(self.core_y, self.core_w, self.n_divisor, self.h,
                                  y[mid])[0]
        if np.any(right):
            out[right] = self.right.density(y[right]) if self.right else 0.0
        if np.any(left):
            out[left] = self.left.density(y[left]) if self.left else 0.0
        out *= self.factor
        return float(out[0]) if scalar else out

    __call__ = eval

    def region(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y >= self.y_R, "gpd_right",
                        np.where(y <= self.y_L, "gpd_left", "core")).astype(object)

    def total_mass(self):
        core = kde_mass(self.core_y, self.core_w, self.n_divisor, self.h,
                        self.y_L, self.y_R)
        tails = sum(f.exceed_mass for f in (self.left, self.right) if f is not None)
        return core + tails

    def breakpoints(self):
        return (self.y_L, self.y_R)

    def estimate(self, grid, alpha=None, B=100, rng_seed=0):
        """Tabulate on a grid as a DensityEstimate with per-region bands.

        Core points carry the KDE variance (scaled by factor^2); tail points
        report NaN variance, their uncertainty enters only via ci_tail.
        """
        grid = np.asarray(grid, dtype=float)
        value = self.eval(grid)
        region = self.region(grid)
        var = np.full(grid.shape, np.nan)
        core = region == "core"
        clamp = 0
        if np.any(core):
            _, v, clamp = kde_arrays(self.core_y, self.core_w, self.n_divisor,
                                     self.h, grid[core])
            var[core] = v * self.factor ** 2
        lo_y, hi_y = self.core_y.min(), self.core_y.max()
        in_range = (grid >= lo_y) & (grid <= hi_y)
        est = DensityEstimate(grid, value, var, in_range, region=region,
                              clamp_count=clamp)
        if alpha is None:
            return est
        low = np.full(grid.shape, np.nan)
        high = np.full(grid.shape, np.nan)
        if np.any(core):
            l, h = ci_log_delta(value[core], var[core], alpha)
            low[core], high[core] = l, h
        for tag, fit in (("gpd_right", self.right), ("gpd_left", self.left)):
            sel = region == tag
            # no band where the fitted tail itself has no support
            sel &= value > 0
            if fit is None or not np.any(sel) or fit.exceed_mass <= 0:
                continue
            l, h = ci_tail(fit, grid[sel], alpha, B, rngmod.derive_key(rng_seed, tag),
                           strict=False)
            low[sel], high[sel] = l * self.factor, h * self.factor
            self.band_gaps += int(np.sum(np.isnan(l)))
        return est.with_band(low, high)


def splice(core, sample, y_L, y_R, renormalize=False):
    """Assemble the spliced estimator from a KDE core and GPD tail fits.

    ``core`` is the plain DensityEstimate of the same sample (or the
    bandwidth h); only its bandwidth is needed, the core is re-evaluated
    exactly from the sample.
    """
    h = core if np.isscalar(core) else core.h
    if not y_L < y_R:
        raise ValueError("need y_L < y_R")
    left = fit_tail(sample, y_L, "left")
    right = fit_tail(sample, y_R, "right")
    sp = SplicedDensity(sample.y, sample.weight, sample.n_divisor, float(h),
                        float(y_L), float(y_R), left, right)
    return _renormalize(sp) if renormalize else sp


def _renormalize(sp):
    total = sp.total_mass()
    if not total > 0:
        raise DegenerateError("spliced density has zero mass")
    sp.renormalized = True
    sp.factor = 1.0 / total
    return sp


def splice_by_counts(sample, h, n_left, n_right, renormalize=False, max_shift=0):
    """Splice with thresholds at the n_left-th smallest and n_right-th largest Y.

    ``max_shift`` > 0 lets each side search nearby counts when its shape
    estimate hits the boundary (see fit_tail_by_count); the counts used are
    stored on the result.
    """
    y_L, y_R = gpd_thresholds(sample.y, n_left, n_right)
    if max_shift == 0:
        sp = splice(h, sample, y_L, y_R, renormalize)
        sp.counts = (int(n_left), int(n_right))
        return sp
    nl, y_L, left = fit_tail_by_count(sample, n_left, "left", max_shift)
    nr, y_R, right = fit_tail_by_count(sample, n_right, "right", max_shift)
    if not y_L < y_R:
        raise ValueError("need y_L < y_R")
    sp = SplicedDensity(sample.y, sample.weight, sample.n_divisor, float(h),
                        float(y_L), float(y_R), left, right, counts=(nl, nr))
    return _renormalize(sp) if renormalize else sp


# ------------------------------------------------------ transformed data


class TransformedSample:
    """View of a weighted sample with Y replaced by a Box-Cox transform."""

    def __init__(self, sample, transform):
        if np.any(sample.y <= 0):
            raise DomainError("transform domain")
        self.y = np.asarray(transform(sample.y), dtype=float)
        self.weight = sample.weight
        self.n_divisor = sample.n_divisor

    def __len__(self):
        return self.y.size


def _transform_grid(tau, grid_y):
    grid_y = np.asarray(grid_y, dtype=float)
    pos = grid_y > 0
    z = np.full(grid_y.shape, np.nan)
    jac = np.zeros(grid_y.shape)
    z[pos] = tau(grid_y[pos])
    jac[pos] = tau.derivative(grid_y[pos])
    return pos, z, jac


def transform_pipeline(sample, p, h_z, grid_y):
    """KDE of Z = tau_p(Y) mapped back: f_Y(y) = tau_p'(y) f_Z(tau_p(y)).

    The variance is multiplied by tau_p'(y)^2, so the scaled variance of the
    y-density equals that of the z-density at each point. Grid points y <= 0
    lie outside the transformed support and get zero density.
    """
    tau = BoxCoxTransform(p)
    zs = TransformedSample(sample, tau)
    grid_y = np.asarray(grid_y, dtype=float)
    pos, z, jac = _transform_grid(tau, grid_y)
    value = np.zeros(grid_y.shape)
    var = np.zeros(grid_y.shape)
    clamp = 0
    if np.any(pos):
        vz, varz, clamp = kde_arrays(zs.y, zs.weight, zs.n_divisor, h_z, z[pos])
        value[pos] = jac[pos] * vz
        var[pos] = jac[pos] ** 2 * varz
    in_range = (grid_y >= sample.y.min()) & (grid_y <= sample.y.max())
    return DensityEstimate(grid_y, value, var, in_range, clamp_count=clamp, h=float(h_z))


class TransformedSpliced:
    """Spliced estimator built on Z = tau_p(Y), reported on the y-scale."""

    def __init__(self, sample, p, h_z, n_left, n_right, renormalize=False, max_shift=0):
        self.tau = BoxCoxTransform(p)
        zs = TransformedSample(sample, self.tau)
        self.z_spliced = splice_by_counts(zs, h_z, n_left, n_right, renormalize, max_shift)
        self.y_L = float(self.tau.inverse(self.z_spliced.y_L))
        self.y_R = float(self.tau.inverse(self.z_spliced.y_R))

    def eval(self, y):
        y = np.asarray(y, dtype=float)
        pos, z, jac = _transform_grid(self.tau, np.atleast_1d(y))
        out = np.zeros(pos.shape)
        if np.any(pos):
            out[pos] = jac[pos] * self.z_spliced.eval(z[pos])
        return float(out[0]) if y.ndim == 0 else out

    __call__ = eval

    def estimate(self, grid_y, alpha=None, B=100, rng_seed=0):
        """Tabulate on a y-grid; values, variances and bands carry the Jacobian."""
        grid_y = np.asarray(grid_y, dtype=float)
        pos, z, jac = _transform_grid(self.tau, grid_y)
        n = grid_y.size
        value = np.zeros(n)
        var = np.zeros(n)
        low = np.full(n, np.nan)
        high = np.full(n, np.nan)
        region = np.array(["gpd_left"] * n, dtype=object)
        in_range = np.zeros(n, dtype=bool)
        clamp = 0
        if np.any(pos):
            ez = self.z_spliced.estimate(z[pos], alpha, B, rng_seed)
            value[pos] = jac[pos] * ez.value
            var[pos] = jac[pos] ** 2 * ez.variance
            region[pos] = ez.region
            in_range[pos] = ez.in_data_range
            clamp = ez.clamp_count
            if alpha is not None:
                low[pos] = jac[pos] * ez.ci_low
                high[pos] = jac[pos] * ez.ci_high
        est = DensityEstimate(grid_y, value, var, in_range, region=region,
                              clamp_count=clamp)
        return est if alpha is None else est.with_band(low, high)


# ------------------------------------------------------------------ bands


def _z(level):
    return float(special.ndtri(0.5 + 0.5 * level))


def ci_log_delta(value, variance, alpha, level=None):
    """exp(log f +- z sqrt(V / f^2)); NaN where the value is not positive."""
    value = np.asarray(value, dtype=float)
    variance = np.asarray(variance, dtype=float)
    z = _z(1.0 - alpha if level is None else level)
    low = np.full(value.shape, np.nan)
    high = np.full(value.shape, np.nan)
    ok = value > 0
    half = z * np.sqrt(variance[ok]) / value[ok]
    low[ok] = value[ok] * np.exp(-half)
    high[ok] = value[ok] * np.exp(half)
    return low, high


def ci_kde_log(estimate, alpha):
    low, high = ci_log_delta(estimate.value, estimate.variance, alpha)
    return estimate.with_band(low, high)


def ci_tail(fit, y, alpha, B=100, rng_seed=0, strict=True):
    """Band for exceed_mass * g(y) from two sqrt(1 - alpha) component bands.

    The mass band is the log-delta interval; the GPD factor band comes from
    empirical quantiles of g at y over B parameter draws from the asymptotic
    normal law, redrawing infeasible draws (at most 10B attempts per y).
    With ``strict`` off, points that exhaust the attempts get a NaN band
    instead of raising.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    level = math.sqrt(1.0 - alpha)
    p = fit.params
    u = y - p.threshold if p.side == "right" else p.threshold - y
    if np.any(u < 0):
        raise DomainError("y not beyond the GPD threshold")
    c_lo, c_hi = ci_log_delta(np.array([fit.exceed_mass]),
                              np.array([fit.exceed_var]), alpha, level=level)
    gen = rngmod.generator(int(rng_seed), "ci_tail")
    max_tries = 10 * B
    chol = _psd_factor(fit.cov)
    draws = np.array([p.xi, p.beta]) + gen.standard_normal((max_tries, 2)) @ chol.T
    xi_d, beta_d = draws[:, 0], draws[:, 1]
    q = (1.0 - level) / 2.0
    low = np.empty(y.shape)
    high = np.empty(y.shape)
    for j, uj in enumerate(u):
        feasible = (beta_d > 0) & (1.0 + xi_d * uj / np.where(beta_d > 0, beta_d, 1.0) > 0)
        idx = np.flatnonzero(feasible)[:B]
        if idx.size < B:
            if strict:
                raise DegenerateError("too many infeasible bootstrap draws")
            low[j] = high[j] = np.nan
            continue
        g = np.exp(_gpd_logpdf_params(xi_d[idx], beta_d[idx], uj))
        low[j], high[j] = np.quantile(g, [q, 1.0 - q])
    low = low * c_lo[0]
    high = high * c_hi[0]
    if scalar:
        return float(low[0]), float(high[0])
    return low, high


def _gpd_logpdf_params(xi, beta, u):
    """GPD log-density at a fixed exceedance for arrays of parameters."""
    small = np.abs(xi) < XI_ZERO_TOL
    safe = np.where(small, 1.0, xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        general = -np.log(beta) - (1.0 / safe + 1.0) * np.log1p(safe * u / beta)
    return np.where(small, -np.log(beta) - u / beta, general)


def _psd_factor(cov):
    cov = np.asarray(cov, dtype=float)
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    return vecs * np.sqrt(np.maximum(vals, 0.0))
