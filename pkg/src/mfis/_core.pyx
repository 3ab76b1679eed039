# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``mfis._pykernels`` for the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY, fabs, fmax

cnp.import_array()


def kde_log_sums(grid, values, weights, double h):
    cdef double[::1] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t G = g.shape[0], n = v.shape[0], i, j
    out1_arr = np.empty(G)
    out2_arr = np.empty(G)
    cdef double[::1] out1 = out1_arr
    cdef double[::1] out2 = out2_arr
    cdef double[::1] logw = np.empty(n)
    cdef double m, z, a, s1, s2, inv_h = 1.0 / h
    for j in range(n):
        logw[j] = log(w[j]) if w[j] > 0 else -INFINITY
    for i in range(G):
        m = -INFINITY
        for j in range(n):
            z = (g[i] - v[j]) * inv_h
            a = logw[j] - 0.5 * z * z
            if a > m:
                m = a
        if m == -INFINITY:
            out1[i] = -INFINITY
            out2[i] = -INFINITY
            continue
        s1 = 0.0
        s2 = 0.0
        for j in range(n):
            if logw[j] == -INFINITY:
                continue
            z = (g[i] - v[j]) * inv_h
            a = exp(logw[j] - 0.5 * z * z - m)
            s1 += a
            s2 += a * a
        out1[i] = m + log(s1)
        out2[i] = 2.0 * m + log(s2)
    return out1_arr, out2_arr


def nearest_unused(sorted_x, cnp.uint8_t[::1] used, draws):
    cdef double[::1] xs = np.ascontiguousarray(sorted_x, dtype=np.float64)
    cdef double[::1] ds = np.ascontiguousarray(draws, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0], K = ds.shape[0], k, lo, hi, pos, pick
    cdef Py_ssize_t a, b, mid
    cdef double d
    out_arr = np.empty(K, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    for k in range(K):
        d = ds[k]
        a = 0
        b = n
        while a < b:
            mid = (a + b) // 2
            if xs[mid] < d:
                a = mid + 1
            else:
                b = mid
        pos = a
        lo = pos - 1
        while lo >= 0 and used[lo]:
            lo -= 1
        hi = pos
        while hi < n and used[hi]:
            hi += 1
        if lo < 0 and hi >= n:
            for a in range(k, K):
                out[a] = -1
            return out_arr
        if lo < 0:
            pick = hi
        elif hi >= n:
            pick = lo
        elif d - xs[lo] <= xs[hi] - d:
            pick = lo
        else:
            pick = hi
        used[pick] = 1
        out[k] = pick
    return out_arr


cdef int _cholesky_solve(double* A, double* r, int p) nogil:
    # in-place Cholesky of p x p row-major A, then solve A c = r into r
    cdef int i, j, l
    cdef double s
    for j in range(p):
        s = A[j * p + j]
        for l in range(j):
            s -= A[j * p + l] * A[j * p + l]
        if s <= 0:
            return -1
        A[j * p + j] = s ** 0.5
        for i in range(j + 1, p):
            s = A[i * p + j]
            for l in range(j):
                s -= A[i * p + l] * A[j * p + l]
            A[i * p + j] = s / A[j * p + j]
    for i in range(p):
        s = r[i]
        for l in range(i):
            s -= A[i * p + l] * r[l]
        r[i] = s / A[i * p + i]
    for i in range(p - 1, -1, -1):
        s = r[i]
        for l in range(i + 1, p):
            s -= A[l * p + i] * r[l]
        r[i] = s / A[i * p + i]
    return 0


def hinge_rss(x, y, breakpoints, double ridge):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    bps_arr = np.asarray(breakpoints, dtype=np.float64)
    if bps_arr.ndim == 1:
        bps_arr = bps_arr[:, None]
    cdef double[:, ::1] bps = np.ascontiguousarray(bps_arr)
    cdef Py_ssize_t M = bps.shape[0], n = xv.shape[0], m, i
    cdef int k = <int>bps.shape[1], p = k + 2, a, b
    out_arr = np.empty(M)
    cdef double[::1] out = out_arr
    cdef double[::1] A = np.empty(p * p)
    cdef double[::1] r = np.empty(p)
    cdef double[::1] row = np.empty(p)
    cdef double fit, res, rss
    for m in range(M):
        for a in range(p * p):
            A[a] = 0.0
        for a in range(p):
            r[a] = 0.0
        for i in range(n):
            row[0] = 1.0
            row[1] = xv[i]
            for a in range(k):
                row[2 + a] = fmax(xv[i] - bps[m, a], 0.0)
            for a in range(p):
                r[a] += row[a] * yv[i]
                for b in range(a + 1):
                    A[a * p + b] += row[a] * row[b]
        for a in range(p):
            A[a * p + a] += ridge
            for b in range(a):
                A[b * p + a] = A[a * p + b]
        if _cholesky_solve(&A[0], &r[0], p) != 0:
            out[m] = INFINITY
            continue
        rss = 0.0
        for i in range(n):
            fit = r[0] + r[1] * xv[i]
            for a in range(k):
                fit += r[2 + a] * fmax(xv[i] - bps[m, a], 0.0)
            res = yv[i] - fit
            rss += res * res
        out[m] = rss
    return out_arr
