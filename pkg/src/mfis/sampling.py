"""Selecting low-fidelity pool entries for high-fidelity evaluation.

``sample_algorithm1`` draws from a fixed three-region proposal;
``sample_algorithm2`` learns the mean function as it goes, refitting a
piecewise linear model after each new high-fidelity evaluation.
"""

import csv
import io
import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from mfis import _kernels
from mfis import rng as rngmod
from mfis.errors import DegenerateError, DomainError
from mfis.plr import select_by_aic
from mfis.proposal import optimal_p_piecewise, uniform_p, weight

log = logging.getLogger(__name__)

REGIONS = ("left-tail", "center", "right-tail")
CSV_HEADER = ("seed", "x", "y", "weight", "region", "round")


def fmt(v):
    return format(float(v), ".17g")


class TwoFidelityOracle:
    """Paired cheap/expensive outputs keyed by a shared integer seed.

    Subclasses implement vectorized ``lo`` and ``hi``; both must be pure
    functions of the seed.
    """

    def lo(self, seeds):
        raise NotImplementedError

    def hi(self, seeds):
        raise NotImplementedError


class LowFiPool:
    """Pool of (seed, low-fidelity value) with a stable sorted view."""

    def __init__(self, seeds, x):
        seeds = np.asarray(seeds, dtype=np.int64)
        x = np.asarray(x, dtype=float)
        if seeds.shape != x.shape or seeds.ndim != 1:
            raise ValueError("seeds and x must be 1-d arrays of equal length")
        if np.unique(seeds).size != seeds.size:
            raise ValueError("pool seeds must be unique")
        self.seeds = seeds
        self.x = x
        order = np.argsort(x, kind="stable")
        self.order = order
        self.sorted_x = x[order]
        self.sorted_seeds = seeds[order]

    def __len__(self):
        return self.x.size

    @classmethod
    def from_oracle(cls, oracle, n0, first_seed=0):
        seeds = np.arange(first_seed, first_seed + n0, dtype=np.int64)
        return cls(seeds, oracle.lo(seeds))


@dataclass
class WeightedSample:
    seed: np.ndarray
    x: np.ndarray
    y: np.ndarray
    weight: np.ndarray
    region: np.ndarray
    round: np.ndarray
    n_divisor: int = None

    def __post_init__(self):
        self.seed = np.asarray(self.seed, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.weight = np.asarray(self.weight, dtype=float)
        self.region = np.asarray(self.region, dtype=object)
        self.round = np.asarray(self.round, dtype=np.int64)
        n = self.seed.size
        for name in ("x", "y", "weight", "region", "round"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"field {name} has wrong length")
        if self.n_divisor is None:
            self.n_divisor = n

    def __len__(self):
        return self.seed.size

    @classmethod
    def empty(cls):
        return cls([], [], [], [], [], [], 0)

    @classmethod
    def concat(cls, parts, n_divisor=None):
        fields = {k: np.concatenate([getattr(p, k) for p in parts])
                  for k in ("seed", "x", "y", "weight", "region", "round")}
        return cls(**fields, n_divisor=n_divisor)

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i in range(len(self)):
            w.writerow([int(self.seed[i]), fmt(self.x[i]), fmt(self.y[i]),
                        fmt(self.weight[i]), self.region[i], int(self.round[i])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, n_divisor=None):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ValueError(f"expected header {','.join(CSV_HEADER)}")
        body = rows[1:]
        return cls([int(r[0]) for r in body], [float(r[1]) for r in body],
                   [float(r[2]) for r in body], [float(r[3]) for r in body],
                   [r[4] for r in body], [int(r[5]) for r in body],
                   n_divisor=n_divisor)


# ---------------------------------------------------------------- sampling


def inverse_cdf_sample(density, u):
    """Invert the tabulated CDF of ``density`` at u by linear interpolation."""
    u = np.asarray(u, dtype=float)
    grid, cdf = density.grid, density.grid_cdf
    # right-continuous search skips zero-mass cells
    i = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, grid.size - 2)
    c0, c1 = cdf[i], cdf[i + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(c1 > c0, (u - c0) / (c1 - c0), 0.0)
    out = grid[i] + np.clip(t, 0.0, 1.0) * (grid[i + 1] - grid[i])
    out = np.where(u <= 0, grid[0], np.where(u >= 1, grid[-1], out))
    return float(out) if out.ndim == 0 else out


def _interior_slice(pool, plan):
    return slice(plan.r_L, len(pool) - plan.r_R)


def sample_algorithm1(pool, spec, oracle, rng_seed, f_X):
    """All tail entries plus nearest-neighbour matches of p_X draws.

    ``f_X`` is the nominal low-fidelity density used for central weights.
    """
    plan = spec.plan
    if len(pool) != plan.N0:
        raise ValueError("pool size does not match the threshold plan")
    n_c = plan.n_center
    if n_c < 1:
        raise ValueError("no central draws requested")
    inner = _interior_slice(pool, plan)
    inner_x = pool.sorted_x[inner]
    inner_seeds = pool.sorted_seeds[inner]
    if n_c > inner_x.size:
        raise DegenerateError("pool too small")
    gen = rngmod.generator(int(rng_seed), "algorithm1")
    draws = inverse_cdf_sample(spec.p_X, gen.random(n_c))
    used = np.zeros(inner_x.size, dtype=np.uint8)
    pick = _kernels.nearest_unused(inner_x, used, np.atleast_1d(draws))
    if np.any(pick < 0):
        raise DegenerateError("pool too small")
    seeds = np.concatenate([pool.sorted_seeds[:plan.r_L], inner_seeds[pick],
                            pool.sorted_seeds[plan.N0 - plan.r_R:]])
    x = np.concatenate([pool.sorted_x[:plan.r_L], inner_x[pick],
                        pool.sorted_x[plan.N0 - plan.r_R:]])
    region = np.array(["left-tail"] * plan.r_L + ["center"] * n_c
                      + ["right-tail"] * plan.r_R, dtype=object)
    y = np.asarray(oracle.hi(seeds), dtype=float)
    w = weight(spec, f_X, x)
    # region tags follow pool position, weights follow the value
    w[:plan.r_L] = spec.tail_weight_L
    w[plan.N - plan.r_R:] = spec.tail_weight_R
    return WeightedSample(seeds, x, y, w, region, np.zeros(plan.N, dtype=np.int64),
                          n_divisor=plan.N)


@dataclass
class Algorithm2Result:
    sample: WeightedSample
    model: object
    initial: WeightedSample
    round_log: list = field(default_factory=list)

    @property
    def fallback_count(self):
        return sum(1 for r in self.round_log if r["fallback"])


class _PoolMatcher:
    def __init__(self, pool, positions):
        self.x = pool.sorted_x[positions]
        self.seeds = pool.sorted_seeds[positions]
        self.used = np.zeros(self.x.size, dtype=np.uint8)

    def take(self, targets):
        pick = _kernels.nearest_unused(self.x, self.used, np.atleast_1d(targets))
        if np.any(pick < 0):
            raise DegenerateError("pool too small")
        return self.seeds[pick], self.x[pick]


class _FreshSeeds:
    """Rejection search for new seeds with lo(seed) inside a band."""

    def __init__(self, oracle, tol, first_seed=0, batch=4096, max_batches=10_000):
        self.oracle = oracle
        self.tol = tol
        self.next_seed = first_seed
        self.batch = batch
        self.max_batches = max_batches

    def take(self, targets):
        seeds, xs = [], []
        for t in np.atleast_1d(targets):
            for _ in range(self.max_batches):
                cand = np.arange(self.next_seed, self.next_seed + self.batch,
                                 dtype=np.int64)
                lo = np.asarray(self.oracle.lo(cand), dtype=float)
                hit = np.flatnonzero(np.abs(lo - t) <= self.tol)
                if hit.size:
                    j = int(hit[0])
                    seeds.append(int(cand[j]))
                    xs.append(float(lo[j]))
                    self.next_seed = int(cand[j]) + 1
                    break
                self.next_seed += self.batch
            else:
                raise DegenerateError("no low-fidelity output near target")
        return np.array(seeds, dtype=np.int64), np.array(xs)


def sample_algorithm2(f_X, x_L, x_R, oracle, rng_seed, N_tilde, n0_init=20,
                      pool=None, pool_positions=None, max_breakpoints=4,
                      candidate_grid=40, refit_every=1, first_seed=0):
    """Adaptive sampling with progressive piecewise linear mean estimates.

    With a ``pool`` the draws are matched to unused pool entries (restricted
    to ``pool_positions`` of the sorted view when given); otherwise fresh
    seeds are searched whose low-fidelity value falls within one grid step
    of the drawn target. Initial points are returned separately and carry
    round index -1; the sample's weights are f_X / p_hat.
    """
    if n0_init < 4:
        raise ValueError("n0_init must be at least 4")
    if N_tilde < 0:
        raise ValueError("N_tilde must be nonnegative")
    if pool is not None:
        if pool_positions is None:
            inside = (pool.sorted_x > x_L) & (pool.sorted_x < x_R)
            pool_positions = np.flatnonzero(inside)
        source = _PoolMatcher(pool, pool_positions)
    else:
        source = _FreshSeeds(oracle, (x_R - x_L) / 2047.0, first_seed=first_seed)
    gen = rngmod.generator(int(rng_seed), "algorithm2")
    targets = x_L + (x_R - x_L) * gen.random(n0_init)
    s0, x0 = source.take(targets)
    y0 = np.asarray(oracle.hi(s0), dtype=float)
    initial = WeightedSample(s0, x0, y0, np.ones(n0_init), ["center"] * n0_init,
                             np.full(n0_init, -1), n_divisor=n0_init)
    xs, ys = list(x0), list(y0)
    model = select_by_aic(np.array(xs), np.array(ys), max_breakpoints,
                          candidate_grid, domain=(x_L, x_R))

    seeds_out, x_out, y_out, w_out = [], [], [], []
    round_log = []
    for t in range(1, N_tilde + 1):
        fallback = False
        try:
            p_hat = optimal_p_piecewise(model, f_X, x_L, x_R)
        except DomainError as exc:
            log.debug("round %d: proposal fallback (%s)", t, exc)
            p_hat = uniform_p(x_L, x_R)
            fallback = True
        target = inverse_cdf_sample(p_hat, gen.random())
        s_t, x_t = source.take([target])
        y_t = float(np.asarray(oracle.hi(s_t), dtype=float)[0])
        px = float(p_hat.eval(x_t[0]))
        w_t = float(f_X.eval(x_t[0])) / px
        seeds_out.append(int(s_t[0]))
        x_out.append(float(x_t[0]))
        y_out.append(y_t)
        w_out.append(w_t)
        xs.append(float(x_t[0]))
        ys.append(y_t)
        round_log.append({"round": t, "fallback": fallback,
                          "n_breakpoints": model.n_breakpoints})
        if t % refit_every == 0 or t == N_tilde:
            model = select_by_aic(np.array(xs), np.array(ys), max_breakpoints,
                                  candidate_grid, domain=(x_L, x_R))
    n = len(seeds_out)
    sample = WeightedSample(seeds_out, x_out, y_out, w_out, ["center"] * n,
                            np.arange(1, n + 1), n_divisor=n)
    return Algorithm2Result(sample, model, initial, round_log)


def sample_adaptive_with_tails(pool, plan, f_X, oracle, rng_seed, n0_init=20,
                               max_breakpoints=4, candidate_grid=40, refit_every=1):
    """Pool tails (as in Algorithm 1) plus an adaptive central sample.

    The central sample has N - r_L - r_R points; its weights are rescaled by
    the central mass c_0 = (N - r_L - r_R) / N so that the combined sample
    estimates with divisor N.
    """
    n_c = plan.n_center
    inner = np.arange(plan.r_L, plan.N0 - plan.r_R)
    res = sample_algorithm2(f_X, plan.x_L, plan.x_R, oracle, rng_seed, n_c,
                            n0_init=n0_init, pool=pool, pool_positions=inner,
                            max_breakpoints=max_breakpoints,
                            candidate_grid=candidate_grid, refit_every=refit_every)
    tw_L = float(Fraction(plan.r_L, plan.N0) / Fraction(plan.r_L, plan.N))
    tw_R = float(Fraction(plan.r_R, plan.N0) / Fraction(plan.r_R, plan.N))
    left_s = pool.sorted_seeds[:plan.r_L]
    right_s = pool.sorted_seeds[plan.N0 - plan.r_R:]
    left = WeightedSample(left_s, pool.sorted_x[:plan.r_L], oracle.hi(left_s),
                          np.full(plan.r_L, tw_L), ["left-tail"] * plan.r_L,
                          np.zeros(plan.r_L), plan.r_L)
    right = WeightedSample(right_s, pool.sorted_x[plan.N0 - plan.r_R:],
                           oracle.hi(right_s), np.full(plan.r_R, tw_R),
                           ["right-tail"] * plan.r_R, np.zeros(plan.r_R), plan.r_R)
    c0 = n_c / plan.N
    center = res.sample
    center = WeightedSample(center.seed, center.x, center.y, center.weight / c0,
                            center.region, center.round, n_c)
    combined = WeightedSample.concat([left, center, right], n_divisor=plan.N)
    return combined, res
