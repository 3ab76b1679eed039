"""Pure NumPy implementations of the hot kernels.

Used when the compiled ``mfis._core`` extension is unavailable or when
``MFIS_PURE_PYTHON=1``. Signatures and results match the compiled module.
"""

import numpy as np

_CHUNK = 1 << 22


def kde_log_sums(grid, values, weights, h):
    """log sum_i w_i phi(z_i) and log sum_i w_i^2 phi(z_i)^2 per grid point.

    ``phi`` here is the unnormalized Gaussian exp(-z^2/2), z = (y - Y_i)/h.
    Zero weights contribute nothing; an all-zero row gives -inf.
    """
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    out1 = np.empty(grid.size)
    out2 = np.empty(grid.size)
    if values.size == 0:
        out1.fill(-np.inf)
        out2.fill(-np.inf)
        return out1, out2
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    rows = max(1, _CHUNK // max(values.size, 1))
    for start in range(0, grid.size, rows):
        g = grid[start:start + rows, None]
        z = (g - values[None, :]) / h
        a = logw[None, :] - 0.5 * z * z
        m = a.max(axis=1)
        safe = np.where(np.isfinite(m), m, 0.0)
        with np.errstate(divide="ignore"):
            s1 = safe + np.log(np.exp(a - safe[:, None]).sum(axis=1))
            s2 = 2.0 * safe + np.log(np.exp(2.0 * (a - safe[:, None])).sum(axis=1))
        s1[~np.isfinite(m)] = -np.inf
        s2[~np.isfinite(m)] = -np.inf
        out1[start:start + rows] = s1
        out2[start:start + rows] = s2
    return out1, out2


def nearest_unused(sorted_x, used, draws):
    """Match each draw to the nearest unused entry of ``sorted_x``.

    ``used`` (uint8) is updated in place. Equidistant candidates resolve to
    the smaller value. Returns the matched positions, or -1 once the pool is
    exhausted.
    """
    sorted_x = np.asarray(sorted_x, dtype=np.float64)
    n = sorted_x.size
    out = np.empty(len(draws), dtype=np.int64)
    for k, d in enumerate(np.asarray(draws, dtype=np.float64)):
        pos = int(np.searchsorted(sorted_x, d, side="left"))
        lo = pos - 1
        while lo >= 0 and used[lo]:
            lo -= 1
        hi = pos
        while hi < n and used[hi]:
            hi += 1
        if lo < 0 and hi >= n:
            out[k:] = -1
            return out
        if lo < 0:
            pick = hi
        elif hi >= n:
            pick = lo
        else:
            pick = lo if d - sorted_x[lo] <= sorted_x[hi] - d else hi
        used[pick] = 1
        out[k] = pick
    return out


def hinge_rss(x, y, breakpoints, ridge):
    """Residual sum of squares of continuous broken-line fits.

    Row ``m`` of ``breakpoints`` (shape M x k) gives the hinge locations for
    one model with basis {1, x, (x - b_1)_+, ..., (x - b_k)_+}. Solved by
    normal equations with ``ridge`` on the diagonal.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    bps = np.asarray(breakpoints, dtype=np.float64)
    if bps.ndim == 1:
        bps = bps[:, None]
    M, k = bps.shape
    n = x.size
    p = k + 2
    out = np.empty(M)
    step = max(1, (1 << 21) // max(n * p, 1))
    for start in range(0, M, step):
        b = bps[start:start + step]
        X = np.empty((b.shape[0], n, p))
        X[:, :, 0] = 1.0
        X[:, :, 1] = x[None, :]
        if k:
            X[:, :, 2:] = np.maximum(x[None, :, None] - b[:, None, :], 0.0)
        A = np.einsum("mni,mnj->mij", X, X)
        A[:, np.arange(p), np.arange(p)] += ridge
        r = np.einsum("mni,n->mi", X, y)
        coef = np.linalg.solve(A, r[:, :, None])[:, :, 0]
        fitted = np.einsum("mni,mi->mn", X, coef)
        resid = y[None, :] - fitted
        out[start:start + step] = np.einsum("mn,mn->m", resid, resid)
    return out
