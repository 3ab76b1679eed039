"""Time the compiled kernels against the NumPy fallback.

Each backend runs in its own interpreter because the choice is made at
import (``MFIS_PURE_PYTHON=1`` forces NumPy). Results are also checked for
agreement on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from mfis import _kernels as K

def best(f, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = f()
        times.append(time.perf_counter() - t)
    return min(times), out

repeat = int(sys.argv[1])
rng = np.random.default_rng(1)
res = {"backend": K.BACKEND}

grid = np.linspace(-60, 60, 481)
y = rng.standard_t(3, 150) * 10
w = rng.gamma(2.0, 0.5, 150)
t, out = best(lambda: K.kde_log_sums(grid, y, w, 3.0), repeat)
res["kde_log_sums"] = {"seconds": t, "checksum": float(np.sum(out[0]) + np.sum(out[1]))}

pool = np.sort(rng.normal(size=1_000_000))
draws = rng.uniform(-2, 2, 150)
def match():
    used = np.zeros(pool.size, dtype=np.uint8)
    return K.nearest_unused(pool, used, draws)
t, out = best(match, repeat)
res["nearest_unused"] = {"seconds": t, "checksum": int(np.sum(out))}

x = np.sort(rng.uniform(-3, 3, 200))
yy = np.abs(x) + rng.normal(scale=0.2, size=x.size)
cand = np.quantile(x, np.linspace(0.05, 0.95, 40))
bps = np.array([[a, b] for a in cand for b in cand if a < b])
t, out = best(lambda: K.hinge_rss(x, yy, bps, 1e-10), repeat)
res["hinge_rss"] = {"seconds": t, "checksum": float(np.sum(out))}
print(json.dumps(res))
"""


def run_backend(pure, repeat):
    env = dict(os.environ)
    if pure:
        env["MFIS_PURE_PYTHON"] = "1"
    else:
        env.pop("MFIS_PURE_PYTHON", None)
    out = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", help="also write results here")
    args = parser.parse_args(argv)
    compiled = run_backend(False, args.repeat)
    python = run_backend(True, args.repeat)
    if compiled["backend"] != "cython":
        print("compiled extension not importable; both runs used NumPy", file=sys.stderr)
    rows = []
    print(f"{'kernel':<16}{'cython s':>12}{'numpy s':>12}{'speedup':>10}  agree")
    for name in ("kde_log_sums", "nearest_unused", "hinge_rss"):
        c, p = compiled[name], python[name]
        agree = abs(c["checksum"] - p["checksum"]) <= 1e-9 * max(1.0, abs(p["checksum"]))
        speedup = p["seconds"] / c["seconds"]
        rows.append({"kernel": name, "cython_seconds": c["seconds"],
                     "numpy_seconds": p["seconds"], "speedup": speedup, "agree": agree})
        print(f"{name:<16}{c['seconds']:>12.5f}{p['seconds']:>12.5f}{speedup:>10.1f}  {agree}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"compiled_backend": compiled["backend"], "results": rows}, fh, indent=2)
    return 0 if all(r["agree"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
