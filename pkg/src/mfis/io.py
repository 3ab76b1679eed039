"""Reading and writing pools of paired low/high-fidelity values."""

import csv
import json
import math

import numpy as np

from mfis.errors import DomainError
from mfis.sampling import LowFiPool, TwoFidelityOracle


def fmt(v):
    return format(float(v), ".17g")


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=True)
        fh.write("\n")


class MissingHighFidelity(KeyError):
    """A promoted seed has no recorded high-fidelity value."""

    def __init__(self, seeds):
        self.seeds = [int(s) for s in seeds]
        super().__init__(f"no high-fidelity value for {len(self.seeds)} seed(s), "
                         f"first {self.seeds[0]}")


class ReplayOracle(TwoFidelityOracle):
    """Serves recorded values; hi() fails for seeds without a y."""

    def __init__(self, seeds, x, y):
        self._x = {int(s): float(v) for s, v in zip(seeds, x)}
        self._y = {int(s): float(v) for s, v in zip(seeds, y) if not math.isnan(v)}

    @property
    def served(self):
        return sorted(self._y)

    def lo(self, seeds):
        try:
            return np.array([self._x[int(s)] for s in np.atleast_1d(seeds)])
        except KeyError as exc:
            raise DomainError(f"unknown seed {exc.args[0]}") from None

    def hi(self, seeds):
        seeds = [int(s) for s in np.atleast_1d(seeds)]
        missing = [s for s in seeds if s not in self._y]
        if missing:
            raise MissingHighFidelity(missing)
        return np.array([self._y[s] for s in seeds])


def write_pairs(path, seeds, x, y=None):
    """CSV with header seed,x[,y]; NaN or missing y leaves the cell empty."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("seed", "x", "y") if y is not None else ("seed", "x"))
        for i in range(len(seeds)):
            row = [int(seeds[i]), fmt(x[i])]
            if y is not None:
                row.append("" if math.isnan(y[i]) else fmt(y[i]))
            w.writerow(row)


def ingest_pairs(path):
    """Pool of all rows plus a replay oracle for the rows that carry y."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[:2] != ["seed", "x"] or len(header) > 3 or (
                len(header) == 3 and header[2] != "y"):
            raise ValueError(f"{path}: expected header seed,x[,y]")
        seeds, xs, ys = [], [], []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                s = int(row[0])
                xv = float(row[1])
                yv = float(row[2]) if len(row) > 2 and row[2].strip() else math.nan
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
            if s in seen:
                raise ValueError(f"{path}:{lineno}: duplicate seed {s}")
            if not math.isfinite(xv):
                raise ValueError(f"{path}:{lineno}: x must be finite")
            seen.add(s)
            seeds.append(s)
            xs.append(xv)
            ys.append(yv)
    if not seeds:
        raise ValueError(f"{path}: no data rows")
    pool = LowFiPool(np.array(seeds, dtype=np.int64), np.array(xs))
    return pool, ReplayOracle(seeds, xs, ys)
