"""Continuous piecewise linear regression with AIC-selected breakpoint count.

The fit uses the hinge basis {1, x, (x - b_1)_+, ...}. Breakpoints are picked
from a grid of interior x-quantiles (exhaustively for k <= 2, greedily with
exchange refinement above that) and then polished jointly by Gauss-Newton
steps on the breakpoint locations.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from mfis import _kernels
from mfis import branches as br
from mfis.errors import DegenerateError, DomainError

RIDGE = 1e-10
RSS_FLOOR = 1e-10
MIN_SEGMENT = 5


@dataclass(frozen=True)
class PiecewiseLinearModel:
    """Broken line through (breakpoints_x[j], breakpoints_y[j])."""

    breakpoints_x: tuple
    breakpoints_y: tuple
    rss: float = math.nan
    n_obs: int = 0
    aic: float = math.nan
    aic_table: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.breakpoints_x) != len(self.breakpoints_y) or len(self.breakpoints_x) < 2:
            raise ValueError("need matching breakpoint arrays of length >= 2")
        if np.any(np.diff(self.breakpoints_x) <= 0):
            raise ValueError("breakpoints_x must be strictly increasing")

    @property
    def J(self):
        return len(self.breakpoints_x) - 1

    @property
    def n_breakpoints(self):
        return self.J - 1

    @property
    def interior_breakpoints(self):
        return tuple(self.breakpoints_x[1:-1])

    @property
    def slopes(self):
        bx = np.asarray(self.breakpoints_x)
        by = np.asarray(self.breakpoints_y)
        return tuple(np.diff(by) / np.diff(bx))

    @property
    def flat_segments(self):
        by = self.breakpoints_y
        return tuple(j for j in range(self.J) if by[j + 1] == by[j])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        bx = np.asarray(self.breakpoints_x)
        by = np.asarray(self.breakpoints_y)
        j = np.clip(np.searchsorted(bx, x, side="right") - 1, 0, self.J - 1)
        x0, x1 = bx[j], bx[j + 1]
        y0, y1 = by[j], by[j + 1]
        return ((x1 - x) / (x1 - x0)) * y0 + ((x - x0) / (x1 - x0)) * y1

    def branches(self):
        """Monotone branches, skipping zero-slope segments."""
        bx, by = self.breakpoints_x, self.breakpoints_y
        return [br.linear_branch(bx[j], bx[j + 1], by[j], by[j + 1])
                for j in range(self.J) if by[j + 1] != by[j]]

    def to_dict(self):
        return {"breakpoints_x": [float(v) for v in self.breakpoints_x],
                "breakpoints_y": [float(v) for v in self.breakpoints_y]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(float(v) for v in d["breakpoints_x"]),
                   tuple(float(v) for v in d["breakpoints_y"]))


def branch_inverse(model, j, y):
    """x on segment j with model(x) = y."""
    bx, by = model.breakpoints_x, model.breakpoints_y
    y0, y1 = by[j], by[j + 1]
    if y1 == y0:
        raise DomainError("non-invertible branch")
    y = np.asarray(y, dtype=float)
    if np.any(y < min(y0, y1)) or np.any(y > max(y0, y1)):
        raise DomainError("y outside branch image")
    x0, x1 = bx[j], bx[j + 1]
    out = (y - y1) * (x1 - x0) / (y1 - y0) + x1
    return float(out) if out.ndim == 0 else out


def induced_density(model, f_X, y):
    """Density of m(X) for X ~ f_X restricted to the model's domain."""
    out = br.image_density(model.branches(), f_X, y)
    return float(out) if out.ndim == 0 else out


# -------------------------------------------------------------- fitting


def _design_coef(x, y, bps):
    cols = [np.ones_like(x), x] + [np.maximum(x - b, 0.0) for b in bps]
    X = np.column_stack(cols)
    A = X.T @ X + RIDGE * np.eye(X.shape[1])
    return np.linalg.solve(A, X.T @ y)


class _Fitter:
    """Holds standardized data and evaluates RSS for breakpoint sets."""

    def __init__(self, x, y, candidate_grid, min_segment=MIN_SEGMENT):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("x and y must be 1-d arrays of equal length")
        order = np.lexsort((y, x))
        x, y = x[order], y[order]
        if x[0] == x[-1]:
            raise DegenerateError("x-values are all equal")
        self.loc = 0.5 * (x[0] + x[-1])
        self.scale = 0.5 * (x[-1] - x[0])
        self.x = x
        self.y = y
        self.xs = (x - self.loc) / self.scale
        self.n = x.size
        levels = np.linspace(0.0, 1.0, candidate_grid + 2)[1:-1]
        cand = np.unique(np.quantile(self.xs, levels))
        self.cand = cand[(cand > self.xs[0]) & (cand < self.xs[-1])]
        self.min_segment = int(min_segment)

    def feasible(self, sets):
        """Rows of ``sets`` leaving at least min_segment points on every segment."""
        sets = np.asarray(sets, dtype=float)
        if sets.ndim == 1:
            sets = sets[:, None]
        if sets.shape[1] == 0:
            return np.ones(sets.shape[0], dtype=bool)
        pos = np.searchsorted(self.xs, np.sort(sets, axis=1), side="right")
        edges = np.column_stack([np.zeros(len(pos), dtype=pos.dtype), pos,
                                 np.full(len(pos), self.n, dtype=pos.dtype)])
        return np.all(np.diff(edges, axis=1) >= self.min_segment, axis=1)

    def rss_feasible(self, sets):
        sets = np.asarray(sets, dtype=float)
        out = np.full(sets.shape[0], np.inf)
        ok = self.feasible(sets)
        if np.any(ok):
            out[ok] = self.rss(sets[ok])
        return out

    def rss(self, sets):
        sets = np.asarray(sets, dtype=float)
        if sets.ndim == 1:
            sets = sets[:, None]
        return _kernels.hinge_rss(self.xs, self.y, sets, RIDGE)

    def rss0(self):
        return float(self.rss(np.empty((1, 0)))[0])

    def best_discrete(self, k, start=None):
        cand = self.cand
        if k == 0:
            return (), self.rss0()
        if cand.size < k:
            raise DegenerateError("too few candidate breakpoints")
        if k <= 2 and start is None:
            sets = np.array(list(itertools.combinations(cand, k)))
            r = self.rss_feasible(sets)
            i = int(np.argmin(r))
            if not np.isfinite(r[i]):
                raise DegenerateError("too few points per segment")
            return tuple(sets[i]), float(r[i])
        current = list(start) if start is not None else list(self.best_discrete(k - 1)[0])
        if not self.feasible(np.array([sorted(current)]))[0]:
            current = list(self.best_discrete(k - 1)[0]) if k > 1 else []
        while len(current) < k:
            trial = [sorted(current + [c]) for c in cand if c not in current]
            r = self.rss_feasible(np.array(trial))
            i = int(np.argmin(r))
            if not np.isfinite(r[i]):
                raise DegenerateError("too few points per segment")
            current = trial[i]
        best = float(self.rss(np.array([current]))[0])
        for _ in range(10):
            improved = False
            for pos in range(k):
                others = current[:pos] + current[pos + 1:]
                trial = [sorted(others + [c]) for c in cand if c not in others]
                r = self.rss_feasible(np.array(trial))
                i = int(np.argmin(r))
                if r[i] < best - 1e-14 * max(best, 1.0):
                    best = float(r[i])
                    current = trial[i]
                    improved = True
            if not improved:
                break
        return tuple(current), best

    def polish(self, bps, rss, max_iter=50):
        """Joint Gauss-Newton update of all breakpoints with step halving.

        Each step regresses y on {1, x, (x - b)_+, -1(x > b)}; the indicator
        coefficients divided by the hinge coefficients give the shift.
        """
        bps = np.array(bps, dtype=float)
        k = bps.size
        if k == 0:
            return (), rss
        xs, y = self.xs, self.y
        lo_all, hi_all = xs[0], xs[-1]
        for _ in range(max_iter):
            U = np.maximum(xs[:, None] - bps[None, :], 0.0)
            V = -(xs[:, None] > bps[None, :]).astype(float)
            X = np.column_stack([np.ones_like(xs), xs, U, V])
            A = X.T @ X + RIDGE * np.eye(X.shape[1])
            try:
                coef = np.linalg.solve(A, X.T @ y)
            except np.linalg.LinAlgError:
                break
            c = coef[2:2 + k]
            g = coef[2 + k:]
            if np.any(c == 0):
                break
            step = g / c
            # all halvings of the step in one batched RSS call
            scales = 0.5 ** np.arange(30)
            trials = np.sort(bps[None, :] + scales[:, None] * step[None, :], axis=1)
            ok = ((trials[:, 0] > lo_all) & (trials[:, -1] < hi_all)
                  & np.all(np.diff(trials, axis=1) > 0, axis=1))
            ok[ok] = self.feasible(trials[ok])
            if not np.any(ok):
                break
            r_all = np.full(scales.size, np.inf)
            r_all[ok] = self.rss(trials[ok])
            better = np.flatnonzero(r_all < rss)
            if better.size == 0:
                break
            i = int(better[0])
            trial, r, step = trials[i], float(r_all[i]), scales[i] * step
            gain = rss - r
            bps, rss = trial, r
            if gain <= 1e-13 * rss or np.max(np.abs(step)) < 1e-12:
                break
        return tuple(float(b) for b in bps), rss

    def model(self, bps_std, rss, domain):
        bps = [self.loc + self.scale * b for b in bps_std]
        coef = _design_coef(self.xs, self.y, bps_std)
        lo, hi = domain
        knots = [lo] + [b for b in bps if lo < b < hi] + [hi]

        def f(xv):
            t = (np.asarray(xv, dtype=float) - self.loc) / self.scale
            val = coef[0] + coef[1] * t
            for c, b in zip(coef[2:], bps_std):
                val = val + c * np.maximum(t - b, 0.0)
            return val

        ys = tuple(float(v) for v in f(np.array(knots)))
        return knots, ys


def _check_size(n, k):
    if n < 2 * (k + 2):
        raise DegenerateError("underdetermined")


def fit_plr(x, y, n_breakpoints, candidate_grid=40, domain=None, min_segment=MIN_SEGMENT,
            _fitter=None, _start=None):
    """Least-squares continuous broken line with ``n_breakpoints`` hinges.

    Every segment must hold at least ``min_segment`` observations, which
    keeps hinges from chasing one or two points.
    """
    fitter = _fitter or _Fitter(x, y, candidate_grid, min_segment)
    _check_size(fitter.n, n_breakpoints)
    if domain is None:
        domain = (float(fitter.x[0]), float(fitter.x[-1]))
    bps, rss = fitter.best_discrete(n_breakpoints, start=_start)
    bps, rss = fitter.polish(bps, rss)
    knots, ys = fitter.model(bps, rss, domain)
    model = PiecewiseLinearModel(tuple(float(k) for k in knots), ys, rss=rss,
                                 n_obs=fitter.n)
    return model, rss, bps


def aic(rss, n, k, y_var):
    floor = RSS_FLOOR * n * max(y_var, 1e-300)
    return n * math.log(max(rss, floor) / n) + 2.0 * (2 + 2 * k)


def select_by_aic(x, y, max_breakpoints, candidate_grid=40, domain=None,
                  min_segment=MIN_SEGMENT):
    """Fit k = 0..max_breakpoints hinges and keep the lowest-AIC model.

    Counts for which no breakpoint set satisfies the segment minimum are
    skipped, as are all larger counts.
    """
    if max_breakpoints < 0:
        raise ValueError("max_breakpoints must be nonnegative")
    fitter = _Fitter(x, y, candidate_grid, min_segment)
    _check_size(fitter.n, 0)
    y_var = float(np.var(fitter.y))
    best = None
    table = []
    prev = None
    for k in range(max_breakpoints + 1):
        if fitter.n < 2 * (k + 2) or fitter.cand.size < k:
            break
        start = None
        if k > 2 and prev is not None:
            start = _nearest_candidates(fitter.cand, prev)
        try:
            model, rss, bps = fit_plr(None, None, k, domain=domain, _fitter=fitter,
                                      _start=start)
        except DegenerateError:
            if k == 0:
                raise
            break
        score = aic(rss, fitter.n, k, y_var)
        table.append((k, score, rss))
        prev = bps
        if best is None or score < best[1]:
            best = (model, score)
    model, score = best
    return PiecewiseLinearModel(model.breakpoints_x, model.breakpoints_y,
                                rss=model.rss, n_obs=model.n_obs, aic=score,
                                aic_table=tuple(table))


def _nearest_candidates(cand, values):
    picked = []
    for v in values:
        order = np.argsort(np.abs(cand - v), kind="stable")
        for i in order:
            if cand[i] not in picked:
                picked.append(float(cand[i]))
                break
    return sorted(picked)
