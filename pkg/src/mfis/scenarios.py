"""Scenario registry, synthetic shared-seed oracles and quadrature truth."""

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from mfis import branches as br
from mfis import rng as rngmod
from mfis.distributions import Density1D, HeavyTailedFX, Normal, quadrature
from mfis.errors import ConfigError
from mfis.sampling import TwoFidelityOracle

SCHEMA = 1
MEAN_FUNCTIONS = ("m1", "m2", "m3")
NOISE_KINDS = ("none", "homoscedastic", "heteroscedastic")
PROPOSALS = ("optimal", "uniform", "random", "adaptive")
X_SPAN = 60.0  # truth branches cover |x| <= X_SPAN; f_X mass beyond is negligible


# ---------------------------------------------------------- mean functions


@dataclass(frozen=True)
class MeanFunction:
    name: str
    func: object
    derivative: object
    branches: tuple
    kinks: tuple = ()

    def __call__(self, x):
        return self.func(x)


def _m2(x):
    x = np.asarray(x, dtype=float)
    return np.where(x <= -1.2, 18.0 * (x + 1.2) + 12.0,
                    np.where(x <= 1.2, -10.0 * x, 18.0 * (x - 1.2) - 12.0))


def _m2_prime(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 1.2, -10.0, 18.0)


def _exp_branch(lo, hi):
    return br.Branch(lo, hi, lambda x: np.exp(0.5 * np.asarray(x, dtype=float)),
                     lambda x: 0.5 * np.exp(0.5 * np.asarray(x, dtype=float)),
                     lambda y: 2.0 * np.log(np.asarray(y, dtype=float)))


def mean_function(name):
    s = X_SPAN
    if name == "m1":
        return MeanFunction("m1", lambda x: 3.0 * np.asarray(x, dtype=float),
                            lambda x: np.full(np.shape(x), 3.0),
                            (br.linear_branch(-s, s, -3.0 * s, 3.0 * s),))
    if name == "m2":
        pieces = (br.linear_branch(-s, -1.2, float(_m2(-s)), 12.0),
                  br.linear_branch(-1.2, 1.2, 12.0, -12.0),
                  br.linear_branch(1.2, s, -12.0, float(_m2(s))))
        return MeanFunction("m2", _m2, _m2_prime, pieces, kinks=(-1.2, 1.2))
    if name == "m3":
        return MeanFunction("m3", lambda x: np.exp(0.5 * np.asarray(x, dtype=float)),
                            lambda x: 0.5 * np.exp(0.5 * np.asarray(x, dtype=float)),
                            (_exp_branch(-s, s),))
    raise ConfigError(f"unknown mean function {name!r}")


def make_f_X(spec):
    kind = spec.get("kind")
    if kind == "heavy_tailed":
        return HeavyTailedFX()
    if kind == "normal":
        return Normal(float(spec.get("mu", 0.0)), float(spec.get("sigma", 1.0)))
    raise ConfigError(f"unknown f_X kind {kind!r}")


# ----------------------------------------------------------------- config


@dataclass
class ScenarioConfig:
    """All parameters of a replicated simulation study.

    For heteroscedastic noise ``sigma`` scales the mean: sd(x) = sigma * m(x).
    """

    name: str
    mean_function: str
    noise: str
    sigma: float
    f_X: dict
    N0: int
    N: int
    r_L: int = 25
    r_R: int = 25
    h: float = 3.0
    replications: int = 100
    rng_seed: int = 0
    gpd_exceed_counts: tuple = (25, 25)
    gpd_count_search: int = 25
    boxcox_p: float = None
    proposal: str = "optimal"
    n0_init: int = 20
    N_tilde: int = None
    max_breakpoints: int = 4
    refit_every: int = 1
    candidate_grid: int = 40
    renormalize: bool = False
    grid: tuple = (-100.0, 100.0, 401)
    alpha: float = 0.05
    bootstrap: int = 100
    workers: int = 1
    schema: int = SCHEMA

    def __post_init__(self):
        self.gpd_exceed_counts = tuple(int(c) for c in self.gpd_exceed_counts)
        self.grid = (float(self.grid[0]), float(self.grid[1]), int(self.grid[2]))
        self.validate()

    def validate(self):
        if self.schema != SCHEMA:
            raise ConfigError(f"unsupported config schema {self.schema}")
        if self.mean_function not in MEAN_FUNCTIONS:
            raise ConfigError(f"unknown mean function {self.mean_function!r}")
        if self.noise not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.noise!r}")
        if self.proposal not in PROPOSALS:
            raise ConfigError(f"unknown proposal {self.proposal!r}")
        if self.noise == "none" and self.sigma != 0:
            raise ConfigError("noiseless scenario needs sigma = 0")
        if self.noise != "none" and not self.sigma > 0:
            raise ConfigError("noisy scenario needs sigma > 0")
        if not (self.r_L >= 1 and self.r_R >= 1 and self.r_L + self.r_R < self.N <= self.N0):
            raise ConfigError("need 1 <= r_L, r_R and r_L + r_R < N <= N0")
        if not self.h > 0:
            raise ConfigError("bandwidth must be positive")
        if self.replications < 1:
            raise ConfigError("replications must be positive")
        if len(self.gpd_exceed_counts) != 2 or min(self.gpd_exceed_counts) < 6:
            raise ConfigError("gpd_exceed_counts needs two counts of at least 6")
        if self.gpd_count_search < 0:
            raise ConfigError("gpd_count_search must be nonnegative")
        if self.boxcox_p is not None and not 0 <= self.boxcox_p <= 1:
            raise ConfigError("boxcox_p must lie in [0, 1]")
        if self.n0_init < 4:
            raise ConfigError("n0_init must be at least 4")
        if self.refit_every < 1:
            raise ConfigError("refit_every must be positive")
        if not self.grid[0] < self.grid[1] or self.grid[2] < 2:
            raise ConfigError("grid needs lo < hi and at least 2 points")
        make_f_X(self.f_X)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["gpd_exceed_counts"] = list(self.gpd_exceed_counts)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from None

    def config_hash(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def grid_points(self):
        lo, hi, n = self.grid
        return np.linspace(lo, hi, n)


M3_UNTRANSFORMED_H = round(0.15 * math.exp(2.5), 2)
HEAVY = {"kind": "heavy_tailed"}
STD_NORMAL = {"kind": "normal", "mu": 0.0, "sigma": 1.0}
NORMAL_5 = {"kind": "normal", "mu": 5.0, "sigma": 1.0}

PRESETS = {
    # parameter rows of the two settings tables
    "m1": dict(mean_function="m1", noise="homoscedastic", sigma=6.0, f_X=HEAVY,
               N0=6_000_000, N=150, h=3.0, grid=(-120.0, 120.0, 481)),
    "m2": dict(mean_function="m2", noise="homoscedastic", sigma=6.0, f_X=STD_NORMAL,
               N0=1_000_000, N=150, h=3.0, grid=(-110.0, 110.0, 441)),
    # the 0.15 bandwidth is on the log scale, so this row runs transformed
    "m3": dict(mean_function="m3", noise="heteroscedastic", sigma=1.0 / 6.0,
               f_X=NORMAL_5, N0=1_000_000, N=150, h=0.15, boxcox_p=0.0,
               grid=(0.5, 400.0, 800)),
    "m1-noiseless": dict(mean_function="m1", noise="none", sigma=0.0, f_X=HEAVY,
                         N0=1_000_000, N=150, h=0.5, grid=(-80.0, 80.0, 641)),
    "m3-homoscedastic": dict(mean_function="m3", noise="homoscedastic", sigma=6.0,
                             f_X=NORMAL_5, N0=1_000_000, N=150, h=3.0,
                             grid=(-40.0, 300.0, 681)),
    "m3-noiseless": dict(mean_function="m3", noise="none", sigma=0.0, f_X=NORMAL_5,
                         N0=1_000_000, N=150, h=1.5, grid=(0.5, 300.0, 600)),
    # variants
    "m2-plr": dict(mean_function="m2", noise="homoscedastic", sigma=6.0, f_X=STD_NORMAL,
                   N0=1_000_000, N=150, h=3.0, proposal="adaptive",
                   grid=(-110.0, 110.0, 441)),
    # fixed y-bandwidth matching 0.15 on the log scale at y = m3(5) = e^2.5
    "m3-untransformed": dict(mean_function="m3", noise="heteroscedastic",
                             sigma=1.0 / 6.0, f_X=NORMAL_5, N0=1_000_000, N=150,
                             h=M3_UNTRANSFORMED_H, grid=(0.5, 400.0, 800)),
    "m1-noiseless-random": dict(mean_function="m1", noise="none", sigma=0.0, f_X=HEAVY,
                                N0=1_000_000, N=150, h=0.5, proposal="random",
                                grid=(-80.0, 80.0, 641)),
    "m1-desk": dict(mean_function="m1", noise="homoscedastic", sigma=6.0, f_X=HEAVY,
                    N0=1_000_000, N=150, h=3.0, grid=(-120.0, 120.0, 481)),
    "m1-desk-small": dict(mean_function="m1", noise="homoscedastic", sigma=6.0, f_X=HEAVY,
                          N0=100_000, N=150, h=3.0, grid=(-120.0, 120.0, 481)),
    "ship-like": dict(mean_function="m1", noise="homoscedastic", sigma=6.0, f_X=HEAVY,
                      N0=100_000, N=200, r_L=50, r_R=50, h=3.0,
                      gpd_exceed_counts=(55, 30), proposal="uniform",
                      grid=(-120.0, 120.0, 481)),
}


def preset(name, **overrides):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    params = dict(PRESETS[name])
    params.update(overrides)
    return ScenarioConfig(name=name, **params)


# ----------------------------------------------------------------- oracles


class SyntheticOracle(TwoFidelityOracle):
    """lo = F_X^-1(u(seed)), hi = m(lo) + sd(lo) * e(seed), e standard normal."""

    def __init__(self, mean, f_X, noise="none", sigma=0.0, key=0):
        self.mean = mean
        self.f_X = f_X
        self.noise = noise
        self.sigma = float(sigma)
        self.key = int(key)

    def sd(self, x):
        x = np.asarray(x, dtype=float)
        if self.noise == "none":
            return np.zeros(x.shape)
        if self.noise == "homoscedastic":
            return np.full(x.shape, self.sigma)
        return self.sigma * np.abs(self.mean(x))

    def lo(self, seeds):
        u = rngmod.uniforms(self.key, "lo", np.asarray(seeds, dtype=np.uint64))
        return np.asarray(self.f_X.ppf(u), dtype=float)

    def hi(self, seeds):
        seeds = np.asarray(seeds, dtype=np.uint64)
        x = self.lo(seeds)
        y = np.asarray(self.mean(x), dtype=float)
        if self.noise == "none":
            return y
        return y + self.sd(x) * rngmod.normals(self.key, "noise", seeds)


def make_oracle(config, key):
    return SyntheticOracle(mean_function(config.mean_function), make_f_X(config.f_X),
                           config.noise, config.sigma, key)


# ------------------------------------------------------------------- truth


class TrueDensity(Density1D):
    """Density of Y = m(X) + sd(X) e by quadrature over x."""

    def __init__(self, mean, f_X, noise="none", sigma=0.0, rtol=1e-9):
        self.mean = mean
        self.f_X = f_X
        self.noise = noise
        self.sigma = float(sigma)
        self.rtol = rtol
        self._oracle = SyntheticOracle(mean, f_X, noise, sigma)
        self._x_nodes = tuple(sorted(set(f_X.breakpoints()) | set(mean.kinks)))
        self._x_center = float(f_X.ppf(0.5))

    def _preimages(self, y):
        out = []
        for b in self.mean.branches:
            if b.contains_y(y):
                out.append(float(b.inverse(np.array(y))))
        return out

    def _point(self, y):
        if self.noise == "none":
            return float(br.image_density(self.mean.branches, self.f_X, np.array([y]))[0])
        sd = self._oracle.sd

        def integrand(x):
            s = sd(x)
            z = (y - self.mean(x)) / s
            return self.f_X.eval(x) * np.exp(-0.5 * z * z) / (s * math.sqrt(2 * math.pi))

        pts = self._x_nodes + tuple(self._preimages(y))
        return quadrature(integrand, -math.inf, math.inf, rtol=self.rtol, points=pts,
                          center=self._x_center)

    def eval(self, y):
        y = np.asarray(y, dtype=float)
        out = np.array([self._point(float(v)) for v in np.atleast_1d(y)])
        return float(out[0]) if y.ndim == 0 else out.reshape(y.shape)

    def log_eval(self, y):
        with np.errstate(divide="ignore"):
            return np.log(self.eval(y))

    def _sf_point(self, q):
        if self.noise == "none":
            total = 0.0
            for b in self.mean.branches:
                a, c = b.image
                if q >= c:
                    continue
                xq = b.lo if q < a else float(np.clip(b.inverse(np.array(q)), b.lo, b.hi))
                increasing = float(b.forward(b.hi)) > float(b.forward(b.lo))
                if q < a:
                    lo_x, hi_x = b.lo, b.hi
                elif increasing:
                    lo_x, hi_x = xq, b.hi
                else:
                    lo_x, hi_x = b.lo, xq
                total += float(self.f_X.cdf(hi_x) - self.f_X.cdf(lo_x))
            return total
        sd = self._oracle.sd

        def integrand(x):
            return self.f_X.eval(x) * special.ndtr((self.mean(x) - q) / sd(x))

        pts = self._x_nodes + tuple(self._preimages(q))
        return quadrature(integrand, -math.inf, math.inf, rtol=self.rtol, points=pts,
                          center=self._x_center)

    def sf(self, y):
        y = np.asarray(y, dtype=float)
        out = np.array([self._sf_point(float(v)) for v in np.atleast_1d(y)])
        return float(out[0]) if y.ndim == 0 else out.reshape(y.shape)

    def upper_quantile(self, p, bracket=(-1e3, 1e4)):
        """y with P(Y > y) = p."""
        lo, hi = bracket
        return optimize.brentq(lambda q: self._sf_point(q) - p, lo, hi, xtol=1e-10,
                               rtol=1e-12)

    def lower_quantile(self, p, bracket=(-1e3, 1e4)):
        """y with P(Y <= y) = p."""
        lo, hi = bracket
        return optimize.brentq(lambda q: (1.0 - self._sf_point(q)) - p, lo, hi,
                               xtol=1e-10, rtol=1e-12)

    def _center(self):
        return float(self.mean(self._x_center))


def true_density_oracle(config):
    return TrueDensity(mean_function(config.mean_function), make_f_X(config.f_X),
                       config.noise, config.sigma)
