# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled threshold-sweep kernels.

Same signatures and bit-identical results as ``_kernels_py``.
"""

import numpy as np


cdef Py_ssize_t _bisect_right(const double[::1] a, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if x < a[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def count_at_or_above(scores, thresholds):
    """Number of ``scores`` that are >= each threshold.

    ``thresholds`` must be ascending; ``scores`` may be in any order.
    """
    cdef const double[::1] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef const double[::1] t = np.ascontiguousarray(thresholds, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0], g = t.shape[0], i
    out = np.zeros(g + 1, dtype=np.int64)
    cdef long long[::1] hist = out
    with nogil:
        for i in range(n):
            hist[_bisect_right(t, s[i])] += 1
        # hist[m] = scores clearing exactly the first m thresholds
        for i in range(g - 1, -1, -1):
            hist[i] += hist[i + 1]
    return out[1:]


def eer_sweep(genuine_sorted, impostor_sorted):
    """Merged ascending sweep over every distinct score plus +-inf.

    Returns ``(eer, tau)`` minimizing |FAR - FRR|; ties go to the smaller
    error, then to the smaller threshold.
    """
    cdef const double[::1] gen = np.ascontiguousarray(genuine_sorted, dtype=np.float64)
    cdef const double[::1] imp = np.ascontiguousarray(impostor_sorted, dtype=np.float64)
    cdef Py_ssize_t ng = gen.shape[0], ni = imp.shape[0]
    cdef Py_ssize_t ig = 0, ii = 0
    cdef double dng = <double>ng, dni = <double>ni
    cdef double inf = float("inf")
    cdef double far, frr, diff, err, v
    # tau = -inf accepts everything
    cdef double best_diff = 1.0, best_err = 0.5, best_tau = -inf
    with nogil:
        while ig < ng or ii < ni:
            if ig < ng and (ii >= ni or gen[ig] <= imp[ii]):
                v = gen[ig]
            else:
                v = imp[ii]
            far = (ni - ii) / dni
            frr = ig / dng
            diff = far - frr
            if diff < 0:
                diff = -diff
            err = (far + frr) / 2.0
            if diff < best_diff or (diff == best_diff and err < best_err):
                best_diff = diff
                best_err = err
                best_tau = v
            while ig < ng and gen[ig] == v:
                ig += 1
            while ii < ni and imp[ii] == v:
                ii += 1
        # tau = +inf rejects everything
        if 1.0 < best_diff or (1.0 == best_diff and 0.5 < best_err):
            best_diff = 1.0
            best_err = 0.5
            best_tau = inf
    return best_err, best_tau


from libc.math cimport sqrt


def adam_update(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double c1, double c2,
                double eps, double shrink):
    """Fused in-place Adam update of one flat parameter array."""
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double omb1 = 1.0 - beta1, omb2 = 1.0 - beta2
    with nogil:
        for i in range(n):
            m[i] = m[i] * beta1 + omb1 * g[i]
            v[i] = v[i] * beta2 + omb2 * (g[i] * g[i])
            if shrink != 1.0:
                p[i] = p[i] * shrink
            p[i] = p[i] - lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)
