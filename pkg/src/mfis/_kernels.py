"""Backend selection for the hot kernels.

The compiled extension is used when importable; set ``MFIS_PURE_PYTHON=1``
to force the NumPy versions.
"""

import os

if os.environ.get("MFIS_PURE_PYTHON", "") == "1":
    from mfis import _pykernels as _impl
    BACKEND = "python"
else:
    try:
        from mfis import _core as _impl
        BACKEND = "cython"
    except ImportError:
        from mfis import _pykernels as _impl
        BACKEND = "python"

kde_log_sums = _impl.kde_log_sums
nearest_unused = _impl.nearest_unused
hinge_rss = _impl.hinge_rss

__all__ = ["BACKEND", "kde_log_sums", "nearest_unused", "hinge_rss"]
