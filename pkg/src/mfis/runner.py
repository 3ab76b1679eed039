"""Replicated scenario runs and their on-disk artifacts.

Layout of a run directory::

    manifest.json
    summary.json
    rep-<k>/sample.csv, density.csv, spliced.csv
    aggregate/scaled_variance.csv, scaled_variance_spliced.csv
"""

import logging
import multiprocessing
import os
import traceback
from dataclasses import dataclass, field

import numpy as np

from mfis import __version__
from mfis import rng as rngmod
from mfis._kernels import BACKEND
from mfis.diagnostics import empirical_scaled_variance
from mfis.errors import MfisError
from mfis.estimate import (DensityEstimate, TransformedSpliced, ci_kde_log,
                           splice_by_counts, transform_pipeline, weighted_kde)
from mfis.io import write_json
from mfis.proposal import (build_proposal, calibrate_thresholds, optimal_p_boxcox,
                           optimal_p_monotone, optimal_p_piecewise, uniform_p)
from mfis.sampling import (LowFiPool, WeightedSample, sample_adaptive_with_tails,
                           sample_algorithm1)
from mfis.scenarios import make_f_X, make_oracle, mean_function, true_density_oracle

log = logging.getLogger(__name__)


@dataclass
class ReplicationResult:
    index: int
    seed: int
    sample: WeightedSample = None
    plan: object = None
    density: DensityEstimate = None
    spliced: object = None
    spliced_estimate: DensityEstimate = None
    model: object = None
    fallbacks: int = 0
    error: str = None
    extras: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.error is None

    def record(self):
        """JSON-friendly per-replication facts for the manifest."""
        d = {"index": self.index, "seed": self.seed, "status": "ok" if self.ok else "error"}
        if not self.ok:
            d["error"] = self.error
            return d
        sp = self.spliced
        d["x_L"], d["x_R"] = self.plan.x_L, self.plan.x_R
        d["y_L"], d["y_R"] = sp.y_L, sp.y_R
        tails = _tails(self)
        for tag, fit in (("left", tails.left), ("right", tails.right)):
            if fit is not None:
                d[f"gpd_{tag}"] = {"xi": fit.params.xi, "beta": fit.params.beta,
                                   "exceed_mass": fit.exceed_mass,
                                   "n_exceed": fit.n_exceed}
        d["gpd_counts"] = list(tails.counts)
        d["tail_band_gaps"] = int(tails.band_gaps)
        d["kde_clamps"] = int(self.density.clamp_count)
        d["fallbacks"] = int(self.fallbacks)
        if self.model is not None:
            d["plr_breakpoints"] = [float(b) for b in self.model.interior_breakpoints]
        return d


def central_density(config, plan, f_X):
    """Central proposal p_X chosen by the config."""
    x_L, x_R = plan.x_L, plan.x_R
    if config.proposal == "uniform":
        return uniform_p(x_L, x_R)
    mean = mean_function(config.mean_function)
    if config.mean_function == "m2":
        return optimal_p_piecewise(mean.branches, f_X, x_L, x_R)
    if config.boxcox_p is not None:
        return optimal_p_boxcox(mean.func, mean.derivative, config.boxcox_p, x_L, x_R)
    return optimal_p_monotone(mean.func, mean.derivative, x_L, x_R)


def random_sample(pool, oracle, N, key):
    """N pool entries uniformly without replacement, unit weights."""
    gen = rngmod.generator(key, "random")
    pick = np.sort(gen.choice(len(pool), size=N, replace=False))
    seeds = pool.seeds[pick]
    x = pool.x[pick]
    return WeightedSample(seeds, x, oracle.hi(seeds), np.ones(N), ["center"] * N,
                          np.zeros(N), n_divisor=N)


def draw_sample(config, pool, oracle, f_X, key):
    """Pool thresholds plus the configured sampler; returns (sample, plan, model, fallbacks)."""
    plan = calibrate_thresholds(pool.sorted_x, config.r_L, config.r_R, config.N)
    if config.proposal == "random":
        return random_sample(pool, oracle, config.N, key), plan, None, 0
    if config.proposal == "adaptive":
        sample, res = sample_adaptive_with_tails(
            pool, plan, f_X, oracle, key, n0_init=config.n0_init,
            max_breakpoints=config.max_breakpoints,
            candidate_grid=config.candidate_grid, refit_every=config.refit_every)
        return sample, plan, res.model, res.fallback_count
    spec = build_proposal(plan, central_density(config, plan, f_X))
    return sample_algorithm1(pool, spec, oracle, key, f_X), plan, None, 0


def estimate_sample(config, sample, grid, key, bands=True):
    """Plain and spliced estimates of one sample on the grid."""
    n_left, n_right = config.gpd_exceed_counts
    alpha = config.alpha if bands else None
    if config.boxcox_p is not None:
        density = transform_pipeline(sample, config.boxcox_p, config.h, grid)
        spliced = TransformedSpliced(sample, config.boxcox_p, config.h, n_left, n_right,
                                     config.renormalize, config.gpd_count_search)
    else:
        density = weighted_kde(sample, config.h, grid)
        spliced = splice_by_counts(sample, config.h, n_left, n_right, config.renormalize,
                                   config.gpd_count_search)
    if bands:
        density = ci_kde_log(density, config.alpha)
    sp_est = spliced.estimate(grid, alpha, config.bootstrap, rngmod.derive_key(key, "bands"))
    return density, spliced, sp_est


def run_replication(config, index, bands=True):
    """One replication in memory; module errors are captured, not raised."""
    key = rngmod.replication_seed(config.rng_seed, index)
    res = ReplicationResult(index, key)
    try:
        oracle = make_oracle(config, key)
        f_X = make_f_X(config.f_X)
        pool = LowFiPool.from_oracle(oracle, config.N0)
        sample, plan, model, fallbacks = draw_sample(config, pool, oracle, f_X, key)
        density, spliced, sp_est = estimate_sample(config, sample, config.grid_points,
                                                   key, bands)
    except (MfisError, ValueError, ArithmeticError) as exc:
        log.warning("replication %d failed: %s", index, exc)
        res.error = f"{type(exc).__name__}: {exc}"
        return res
    res.sample, res.plan, res.model, res.fallbacks = sample, plan, model, fallbacks
    res.density, res.spliced, res.spliced_estimate = density, spliced, sp_est
    return res


# ------------------------------------------------------------------ metrics


def mean_abs_log_error(values, truth, mask):
    """Mean |log f_hat - log f| over mask; inf if f_hat vanishes there."""
    if not np.any(mask):
        return float("nan")
    v = values[mask]
    t = truth[mask]
    if np.any(v <= 0):
        return float("inf")
    return float(np.mean(np.abs(np.log(v) - np.log(t))))


def replication_metrics(res, grid, truth, q_lo, q_hi):
    """Region-wise log errors of plain and spliced estimates against truth."""
    sp = res.spliced
    regions = {
        "center": (grid > sp.y_L) & (grid < sp.y_R),
        "right_tail": (grid >= sp.y_R) & (grid <= q_hi),
        "left_tail": (grid <= sp.y_L) & (grid >= q_lo),
    }
    out = {}
    for name, mask in regions.items():
        mask = mask & (truth > 0)
        out[f"plain_{name}"] = mean_abs_log_error(res.density.value, truth, mask)
        out[f"spliced_{name}"] = mean_abs_log_error(res.spliced_estimate.value, truth, mask)
    return out


# --------------------------------------------------------------- full runs


def _rep_dir(out_dir, index):
    return os.path.join(out_dir, f"rep-{index}")


def _write_replication(out_dir, res):
    d = _rep_dir(out_dir, res.index)
    os.makedirs(d, exist_ok=True)
    res.sample.to_csv(os.path.join(d, "sample.csv"))
    res.density.to_csv(os.path.join(d, "density.csv"))
    res.spliced_estimate.to_csv(os.path.join(d, "spliced.csv"))


def _worker(args):
    config, index, out_dir = args
    res = run_replication(config, index)
    if res.ok:
        try:
            _write_replication(out_dir, res)
        except OSError as exc:
            res.error = f"OSError: {exc}"
    return res


def _truth(config):
    try:
        T = true_density_oracle(config)
        grid = config.grid_points
        tail = 1.0 / (2.0 * config.N0)
        return T, T.eval(grid), T.lower_quantile(tail), T.upper_quantile(tail)
    except (MfisError, ValueError) as exc:
        log.warning("no quadrature truth: %s", exc)
        return None, None, None, None


def run_scenario(config, out_dir, truth=True):
    """Run all replications, write artifacts, and return the summary dict.

    Failed replications are recorded in the manifest and skipped in the
    aggregates. Outputs depend only on the config (and the compiled-kernel
    backend, which the manifest records).
    """
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(config, k, out_dir) for k in range(config.replications)]
    if config.workers > 1 and len(jobs) > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(config.workers) as pool:
            results = pool.map(_worker, jobs, chunksize=1)
    else:
        results = [_worker(j) for j in jobs]
    results.sort(key=lambda r: r.index)
    ok = [r for r in results if r.ok]

    T, truth_vals, q_lo, q_hi = _truth(config) if truth else (None, None, None, None)
    grid = config.grid_points
    agg = os.path.join(out_dir, "aggregate")
    os.makedirs(agg, exist_ok=True)
    ref = (lambda g: np.interp(g, grid, truth_vals)) if truth_vals is not None else None
    curves = {}
    if len(ok) >= 2:
        for tag, attr, fname in (("plain", "density", "scaled_variance.csv"),
                                 ("spliced", "spliced_estimate",
                                  "scaled_variance_spliced.csv")):
            curve = empirical_scaled_variance([getattr(r, attr) for r in ok], ref, config.N)
            curve.to_csv(os.path.join(agg, fname))
            curves[tag] = curve

    metrics = []
    if truth_vals is not None:
        for r in ok:
            m = replication_metrics(r, grid, truth_vals, q_lo, q_hi)
            m["index"] = r.index
            metrics.append(m)
    summary = {
        "scenario": config.name,
        "replications": config.replications,
        "succeeded": len(ok),
        "failed": len(results) - len(ok),
        "truth_tail_quantiles": None if q_hi is None else [q_lo, q_hi],
        "metrics": metrics,
        "medians": _medians(metrics),
        "scaled_variance_max_min_ratio": {k: c.max_min_ratio() for k, c in curves.items()},
    }
    if config.proposal == "adaptive":
        counts = [len(r.model.interior_breakpoints) for r in ok]
        summary["plr_breakpoint_counts"] = {str(k): counts.count(k) for k in sorted(set(counts))}
    write_json(os.path.join(out_dir, "summary.json"), summary)
    manifest = {
        "schema": config.schema,
        "software_version": __version__,
        "backend": BACKEND,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "replications": [r.record() for r in results],
        "counters": {
            "kde_variance_clamps": int(sum(r.density.clamp_count for r in ok)),
            "proposal_fallbacks": int(sum(r.fallbacks for r in ok)),
            "gpd_count_shifts": int(sum(_tails(r).counts != config.gpd_exceed_counts
                                        for r in ok)),
            "tail_band_gaps": int(sum(_tails(r).band_gaps for r in ok)),
            "failed_replications": len(results) - len(ok),
        },
    }
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return summary


def _tails(res):
    sp = res.spliced
    return sp.z_spliced if isinstance(sp, TransformedSpliced) else sp


def _medians(metrics):
    if not metrics:
        return {}
    keys = [k for k in metrics[0] if k != "index"]
    return {k: float(np.median([m[k] for m in metrics])) for k in keys}


def failure_trace(exc):
    return "".join(traceback.format_exception_only(type(exc), exc)).strip()
