"""Monotone pieces of a mean function and the density they push forward."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from mfis.errors import DomainError


@dataclass(frozen=True)
class Branch:
    """A strictly monotone piece ``m_j`` of a mean function on [lo, hi]."""

    lo: float
    hi: float
    forward: Callable
    derivative: Callable
    inverse: Callable

    @property
    def image(self):
        a = float(self.forward(self.lo))
        b = float(self.forward(self.hi))
        return (a, b) if a <= b else (b, a)

    def contains_y(self, y):
        a, b = self.image
        y = np.asarray(y, dtype=float)
        return (y >= a) & (y <= b)

    def contains_x(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= self.lo) & (x <= self.hi)


def linear_branch(x0, x1, y0, y1):
    """Affine branch through (x0, y0) and (x1, y1)."""
    slope = (y1 - y0) / (x1 - x0)
    if slope == 0:
        raise DomainError("non-invertible branch")

    def forward(x):
        x = np.asarray(x, dtype=float)
        return ((x1 - x) / (x1 - x0)) * y0 + ((x - x0) / (x1 - x0)) * y1

    def derivative(x):
        return np.full(np.shape(x), slope)

    def inverse(y):
        y = np.asarray(y, dtype=float)
        return (y - y1) * (x1 - x0) / (y1 - y0) + x1

    return Branch(float(x0), float(x1), forward, derivative, inverse)


def image_density(branches, f_X, y):
    """Sum over branches of f_X(m_j^-1(y)) / |m_j'(m_j^-1(y))| where defined.

    A knot shared by two adjacent pieces is one preimage, so at its y the
    two pieces contribute their average rather than their sum.
    """
    y = np.asarray(y, dtype=float)
    total = np.zeros(y.shape)
    for br in branches:
        inside = br.contains_y(y)
        if not np.any(inside):
            continue
        yi = y[inside]
        xi = np.clip(br.inverse(yi), br.lo, br.hi)
        with np.errstate(divide="ignore"):
            contrib = f_X(xi) / np.abs(br.derivative(xi))
        total[inside] += contrib
    for left, right in zip(branches[:-1], branches[1:]):
        if left.hi != right.lo:
            continue
        knot = np.array(left.hi)
        at = y == float(left.forward(knot))
        if np.any(at):
            with np.errstate(divide="ignore"):
                c = f_X(knot) * (1 / np.abs(left.derivative(knot)) +
                                 1 / np.abs(right.derivative(knot)))
            if np.isfinite(c):
                total[at] -= 0.5 * float(c)
    return total


def branch_of(branches, x):
    """Index of the branch containing each x (first match), -1 if none."""
    x = np.asarray(x, dtype=float)
    idx = np.full(x.shape, -1, dtype=np.int64)
    for j in range(len(branches) - 1, -1, -1):
        idx[branches[j].contains_x(x)] = j
    return idx


def evaluate(branches, x):
    """Mean function value at x using the branch that contains it."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, np.nan)
    idx = branch_of(branches, x)
    for j, br in enumerate(branches):
        sel = idx == j
        if np.any(sel):
            out[sel] = br.forward(x[sel])
    return out


def jump_nodes(branches):
    """x-locations where the number of preimages of m(x) changes."""
    levels = set()
    for br in branches:
        levels.update(br.image)
    nodes = set()
    for br in branches:
        nodes.update((br.lo, br.hi))
        a, b = br.image
        for v in levels:
            if a < v < b:
                nodes.add(float(br.inverse(np.array(v))))
    return sorted(nodes)
