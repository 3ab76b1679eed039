"""Command line entry point: ``mfis <verb> ...``.

Exit codes: 0 success, 2 configuration error, 3 runtime error (partial
artifacts are left in place).
"""

import argparse
import dataclasses
import glob
import json
import logging
import math
import os
import sys

import numpy as np

from mfis import __version__
from mfis.diagnostics import beta_ratio_law, empirical_scaled_variance
from mfis.distributions import SampleKDE
from mfis.errors import ConfigError, MfisError
from mfis.estimate import (DensityEstimate, TransformedSpliced, ci_kde_log,
                           splice_by_counts, transform_pipeline, weighted_kde)
from mfis.io import MissingHighFidelity, ingest_pairs, write_json, write_pairs
from mfis.proposal import build_proposal, calibrate_thresholds, uniform_p
from mfis.runner import run_scenario
from mfis.sampling import WeightedSample, sample_algorithm1
from mfis.scenarios import PRESETS, ScenarioConfig, true_density_oracle

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("mfis")

# argparse settings for config fields whose type is not a plain scalar
_FIELD_ARGS = {
    "f_X": dict(type=json.loads, metavar="JSON"),
    "gpd_exceed_counts": dict(type=int, nargs=2, metavar=("LEFT", "RIGHT")),
    "grid": dict(type=float, nargs=3, metavar=("LO", "HI", "N")),
    "boxcox_p": dict(type=float),
    "N_tilde": dict(type=int),
    "renormalize": dict(action=argparse.BooleanOptionalAction),
}
_SKIP_FIELDS = {"schema"}


def _flag(name):
    return "--" + name.replace("_", "-")


def _add_config_flags(parser):
    group = parser.add_argument_group("scenario fields (override the preset)")
    for f in dataclasses.fields(ScenarioConfig):
        if f.name in _SKIP_FIELDS:
            continue
        kwargs = dict(_FIELD_ARGS.get(f.name, {}))
        if not kwargs:
            kind = f.type if isinstance(f.type, type) else type(f.default)
            kwargs["type"] = kind
        group.add_argument(_flag(f.name), dest=f.name, default=argparse.SUPPRESS, **kwargs)


def _grid_arg(values):
    lo, hi, n = values
    if not lo < hi or n < 2:
        raise ConfigError("grid needs LO < HI and N >= 2")
    return np.linspace(lo, hi, int(n))


def build_config(args):
    """Preset < command line flags < config file."""
    fields = {f.name for f in dataclasses.fields(ScenarioConfig)}
    merged = {}
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; "
                              f"known: {', '.join(sorted(PRESETS))}")
        merged.update(PRESETS[args.preset])
        merged["name"] = args.preset
    merged.update({k: v for k, v in vars(args).items() if k in fields})
    if args.config is not None:
        try:
            with open(args.config) as fh:
                merged.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    if not merged:
        raise ConfigError("give --preset or --config")
    merged.setdefault("name", "custom")
    return ScenarioConfig.from_dict(merged)


# ------------------------------------------------------------------ verbs


def cmd_run(args):
    config = build_config(args)
    if args.dump_config:
        print(config.to_json())
        return EXIT_OK
    summary = run_scenario(config, args.out, truth=not args.no_truth)
    print(f"{config.name}: {summary['succeeded']}/{config.replications} replications "
          f"succeeded, artifacts in {args.out}")
    for key, value in sorted(summary["medians"].items()):
        print(f"  median {key}: {value:.4g}")
    if summary["succeeded"] == 0:
        return EXIT_RUNTIME
    if summary["failed"]:
        print(f"  {summary['failed']} replication(s) failed; see manifest.json",
              file=sys.stderr)
    return EXIT_OK


def cmd_ingest(args):
    pool, oracle = ingest_pairs(args.pairs)
    os.makedirs(args.out, exist_ok=True)
    info = {"pool_size": len(pool), "with_y": len(oracle.served),
            "x_min": float(pool.sorted_x[0]), "x_max": float(pool.sorted_x[-1])}
    if args.N is None:
        write_json(os.path.join(args.out, "pool.json"), info)
        print(f"pool of {info['pool_size']} rows, {info['with_y']} with y")
        return EXIT_OK
    if not (args.r_L + args.r_R < args.N <= len(pool)):
        raise ConfigError("need r_L + r_R < N <= pool size")
    plan = calibrate_thresholds(pool.sorted_x, args.r_L, args.r_R, args.N)
    spec = build_proposal(plan, uniform_p(plan.x_L, plan.x_R))
    f_X = SampleKDE(pool.x, args.pool_bandwidth)
    info.update(x_L=plan.x_L, x_R=plan.x_R, pool_bandwidth=f_X.h)
    try:
        sample = sample_algorithm1(pool, spec, oracle, args.rng_seed, f_X)
    except MissingHighFidelity as exc:
        path = os.path.join(args.out, "requests.csv")
        seeds = np.array(exc.seeds, dtype=np.int64)
        write_pairs(path, seeds, oracle.lo(seeds))
        info["requested"] = len(seeds)
        write_json(os.path.join(args.out, "pool.json"), info)
        print(f"{len(seeds)} promoted seed(s) lack y; requests written to {path}",
              file=sys.stderr)
        return EXIT_RUNTIME
    sample.to_csv(os.path.join(args.out, "sample.csv"))
    write_json(os.path.join(args.out, "pool.json"), info)
    print(f"sample of {len(sample)} points written to {args.out}")
    return EXIT_OK


def cmd_estimate(args):
    sample = WeightedSample.from_csv(args.sample, n_divisor=args.n_divisor)
    grid = _grid_arg(args.grid)
    n_left, n_right = args.exceed
    if args.boxcox_p is not None:
        density = transform_pipeline(sample, args.boxcox_p, args.h, grid)
        spliced = TransformedSpliced(sample, args.boxcox_p, args.h, n_left, n_right,
                                     args.renormalize, args.count_search)
    else:
        density = weighted_kde(sample, args.h, grid)
        spliced = splice_by_counts(sample, args.h, n_left, n_right, args.renormalize,
                                   args.count_search)
    density = ci_kde_log(density, args.alpha)
    sp_est = spliced.estimate(grid, args.alpha, args.bootstrap, args.rng_seed)
    os.makedirs(args.out, exist_ok=True)
    density.to_csv(os.path.join(args.out, "density.csv"))
    sp_est.to_csv(os.path.join(args.out, "spliced.csv"))
    tails = spliced.z_spliced if isinstance(spliced, TransformedSpliced) else spliced
    fits = {}
    for tag, fit in (("left", tails.left), ("right", tails.right)):
        fits[tag] = None if fit is None else {
            "xi": fit.params.xi, "beta": fit.params.beta, "threshold": fit.params.threshold,
            "exceed_mass": fit.exceed_mass, "n_exceed": fit.n_exceed,
            "cov": [list(map(float, row)) for row in fit.cov]}
    write_json(os.path.join(args.out, "fit.json"),
               {"y_L": spliced.y_L, "y_R": spliced.y_R, "counts": list(tails.counts),
                "gpd": fits, "kde_clamps": int(density.clamp_count)})
    print(f"estimates written to {args.out}")
    return EXIT_OK


def cmd_diagnose(args):
    manifest_path = os.path.join(args.run_dir, "manifest.json")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {manifest_path}: {exc}") from None
    config = ScenarioConfig.from_dict(manifest["config"])
    out = {}
    for fname in ("density.csv", "spliced.csv"):
        paths = sorted(glob.glob(os.path.join(args.run_dir, "rep-*", fname)))
        if len(paths) < 2:
            continue
        estimates = [DensityEstimate.from_csv(p) for p in paths]
        reference = None
        if args.reference == "true":
            truth = true_density_oracle(config)
            reference = truth.eval
        curve = empirical_scaled_variance(estimates, reference, config.N)
        stem = os.path.splitext(fname)[0]
        path = os.path.join(args.run_dir, "aggregate",
                            f"scaled_variance_{stem}_{args.reference}.csv")
        os.makedirs(os.path.dirname(path), exist_ok=True)
        curve.to_csv(path)
        out[stem] = {"path": path, "points": int(curve.grid.size),
                     "max_min_ratio": curve.max_min_ratio()}
    if not out:
        raise MfisError("need at least 2 replications with artifacts")
    law = {}
    for side, r in (("left", config.r_L), ("right", config.r_R)):
        if r >= 2:
            b = beta_ratio_law(config.N0, r)
            law[side] = {"r": r, "mean": b.mean, "sd": math.sqrt(b.variance)}
    out["threshold_ratio"] = law
    write_json(os.path.join(args.run_dir, "aggregate", "diagnostics.json"), out)
    for stem, d in out.items():
        if stem != "threshold_ratio":
            print(f"{stem}: {d['points']} points, max/min scaled variance "
                  f"{d['max_min_ratio']:.4g}")
    return EXIT_OK


def cmd_demo_waves(args):
    from mfis.waves import longuet_higgins_demo

    res = longuet_higgins_demo(args.n_omega, args.hs, args.tp, args.N0, args.N, args.r_L,
                               args.r_R, tuple(args.exceed), args.h, args.pool_bandwidth,
                               args.rng_seed, args.key, count_search=args.count_search,
                               out_dir=args.out)
    s = res["summary"]
    print(f"wave demo: N0={s['N0']} N={s['N']} rank correlation "
          f"{s['rank_correlation']:.3f}, artifacts in {args.out}")
    return EXIT_OK


# ----------------------------------------------------------------- parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mfis", description="Multifidelity importance sampling for tail densities.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run a replicated scenario")
    p.add_argument("--preset", help=f"one of: {', '.join(sorted(PRESETS))}")
    p.add_argument("--config", help="JSON config file (overrides flags)")
    p.add_argument("--out", default="run")
    p.add_argument("--no-truth", action="store_true",
                   help="skip the quadrature truth and error metrics")
    p.add_argument("--dump-config", action="store_true",
                   help="print the resolved config as JSON and exit")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ingest", help="read seed,x[,y] pairs; optionally draw a sample")
    p.add_argument("pairs")
    p.add_argument("--out", default="ingest")
    p.add_argument("--N", type=int, help="sample size; omit to only summarize the pool")
    p.add_argument("--r-L", dest="r_L", type=int, default=25)
    p.add_argument("--r-R", dest="r_R", type=int, default=25)
    p.add_argument("--pool-bandwidth", type=float,
                   help="bandwidth of the pool KDE used as f_X (default Silverman)")
    p.add_argument("--rng-seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("estimate", help="plain and spliced estimates from a sample CSV")
    p.add_argument("sample")
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--grid", type=float, nargs=3, required=True, metavar=("LO", "HI", "N"))
    p.add_argument("--exceed", type=int, nargs=2, default=(25, 25), metavar=("LEFT", "RIGHT"))
    p.add_argument("--count-search", type=int, default=25,
                   help="move a tail's count by up to this much if its shape fit fails")
    p.add_argument("--boxcox-p", type=float)
    p.add_argument("--renormalize", action="store_true")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--bootstrap", type=int, default=100)
    p.add_argument("--n-divisor", type=int, help="estimator divisor N (default: row count)")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--out", default="estimate")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("diagnose", help="scaled-variance curves from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--reference", choices=("true", "mean"), default="true")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("demo-waves", help="pipeline on synthetic wave records")
    p.add_argument("--n-omega", type=int, default=200)
    p.add_argument("--hs", type=float, default=5.0)
    p.add_argument("--tp", type=float, default=10.0)
    p.add_argument("--N0", type=int, default=20_000)
    p.add_argument("--N", type=int, default=200)
    p.add_argument("--r-L", dest="r_L", type=int, default=50)
    p.add_argument("--r-R", dest="r_R", type=int, default=50)
    p.add_argument("--exceed", type=int, nargs=2, default=(55, 30))
    p.add_argument("--h", type=float, default=0.4)
    p.add_argument("--pool-bandwidth", type=float, default=0.2)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--key", type=int, default=0, help="phase stream key")
    p.add_argument("--count-search", type=int, default=25,
                   help="move a tail's count by up to this much if its shape fit fails")
    p.add_argument("--out", default="waves")
    p.set_defaults(func=cmd_demo_waves)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"mfis: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MfisError, OSError, ValueError, ArithmeticError) as exc:
        print(f"mfis: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
