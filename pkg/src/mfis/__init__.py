"""Multifidelity importance sampling for high-fidelity output densities.

Cheap low-fidelity outputs are used to decide which cases to promote to an
expensive high-fidelity evaluation; the resulting importance-weighted sample
gives a kernel density estimate with generalized Pareto tails spliced on.
"""

__version__ = "0.1.0"

from mfis._kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
