# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the occupancy and smoothing kernels.

Single pass over the raw samples; a sample whose hold straddles an interval
edge is split between the intervals it covers.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, floor

cnp.import_array()

cdef int N_PAIRS = 6
cdef int PAIR_A[6]
cdef int PAIR_B[6]
PAIR_A[:] = [1, 1, 1, 2, 2, 3]
PAIR_B[:] = [2, 3, 4, 3, 4, 4]


def occupancy(times, values, double t0, double interval_s, Py_ssize_t n_intervals, thresholds):
    cdef const double[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef const double[:, ::1] vals = np.ascontiguousarray(np.atleast_2d(values), dtype=np.float64)
    cdef const double[:, ::1] thr = np.ascontiguousarray(np.atleast_2d(thresholds), dtype=np.float64)
    cdef Py_ssize_t n_vars = vals.shape[0]
    cdef Py_ssize_t n_thr = thr.shape[1]
    out_arr = np.zeros((max(n_intervals, 0), n_vars * N_PAIRS), dtype=np.float64)
    if n_intervals <= 0 or t.shape[0] < 2:
        return out_arr
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t n = t.shape[0]
    cdef double t_end = t0 + interval_s * n_intervals
    cdef Py_ssize_t i, k, v, p, j
    cdef int lev
    cdef int[64] levels
    cdef double start, stop, edge, piece
    if n_vars > 64:
        raise ValueError("at most 64 variables supported")

    for i in range(n - 1):
        start = t[i]
        stop = t[i + 1]
        if start < t0:
            start = t0
        if stop > t_end:
            stop = t_end
        if stop <= start:
            continue
        for v in range(n_vars):
            lev = 0
            for j in range(n_thr):
                if thr[v, j] <= vals[v, i]:
                    lev += 1
            levels[v] = lev
        k = <Py_ssize_t>floor((start - t0) / interval_s)
        if k >= n_intervals:
            k = n_intervals - 1
        # guard against rounding at exact edges
        if start >= t0 + interval_s * (k + 1):
            k += 1
        elif k > 0 and start < t0 + interval_s * k:
            k -= 1
        while start < stop and k < n_intervals:
            edge = t0 + interval_s * (k + 1)
            piece = (edge if edge < stop else stop) - start
            for v in range(n_vars):
                lev = levels[v]
                for p in range(N_PAIRS):
                    if PAIR_A[p] <= lev < PAIR_B[p]:
                        out[k, v * N_PAIRS + p] += piece
            start = edge
            k += 1

    for k in range(n_intervals):
        for p in range(n_vars * N_PAIRS):
            out[k, p] /= interval_s
    return out_arr


def smooth_density(x, y, grid, double lengthscale, double radius):
    cdef const double[::1] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] ys = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t m = g.shape[0]
    f_arr = np.empty(m, dtype=np.float64)
    rho_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] f = f_arr
    cdef double[::1] rho = rho_arr
    cdef double inv_l2 = 1.0 / (lengthscale * lengthscale)
    cdef Py_ssize_t i, j
    cdef double d, d2, d2min, w, num, den
    cdef Py_ssize_t count
    for i in range(m):
        d2min = 1e308
        for j in range(n):
            d = g[i] - xs[j]
            d2 = d * d
            if d2 < d2min:
                d2min = d2
        num = 0.0
        den = 0.0
        count = 0
        for j in range(n):
            d = g[i] - xs[j]
            w = exp(-(d * d - d2min) * inv_l2)
            num += w * ys[j]
            den += w
            if fabs(d) < radius:
                count += 1
        f[i] = num / den
        rho[i] = <double>count / n
    return f_arr, rho_arr
