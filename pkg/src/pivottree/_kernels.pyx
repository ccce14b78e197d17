# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled split-scan kernel. See ``_kernels_py`` for the reference version."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

BACKEND = "cython"


cdef inline double _impurity(const Py_ssize_t* counts, Py_ssize_t c, Py_ssize_t size,
                             int criterion, const double* log_table) noexcept nogil:
    cdef Py_ssize_t k, nonzero = 0
    cdef double s = 0.0, p
    cdef double dsize = <double>size
    if criterion == 0:
        for k in range(c):
            p = counts[k] / dsize
            s = s + p * p
        return 1.0 - s
    for k in range(c):
        s = s + (<double>counts[k]) * log_table[counts[k]]
        if counts[k] > 0:
            nonzero += 1
    if nonzero <= 1:
        return 0.0
    return log_table[size] - s / dsize


def scan_sorted_columns(const double[:, :] vals, const Py_ssize_t[:, :] labs,
                        const Py_ssize_t[:] parent_counts, double parent_impurity,
                        Py_ssize_t min_leaf, int criterion, const double[:] log_table):
    cdef Py_ssize_t n = vals.shape[0], k = vals.shape[1], c = parent_counts.shape[0]
    cdef Py_ssize_t i, j, q, nl, nr, best_nl
    cdef double gain, best_gain, best_thr, imp_l, imp_r, a, hi, thr
    cdef double dn = <double>n

    gain_np = np.zeros(k, dtype=np.float64)
    thr_np = np.zeros(k, dtype=np.float64)
    left_np = np.zeros(k, dtype=np.intp)
    cdef double[:] gain_out = gain_np
    cdef double[:] thr_out = thr_np
    cdef Py_ssize_t[:] left_out = left_np
    if n < 2 or c == 0:
        return gain_np, thr_np, left_np

    cdef Py_ssize_t* left = <Py_ssize_t*>malloc(c * sizeof(Py_ssize_t))
    cdef Py_ssize_t* right = <Py_ssize_t*>malloc(c * sizeof(Py_ssize_t))
    if left == NULL or right == NULL:
        free(left)
        free(right)
        raise MemoryError()
    try:
        with nogil:
            for j in range(k):
                for q in range(c):
                    left[q] = 0
                best_gain = -1.0
                best_thr = 0.0
                best_nl = 0
                for i in range(n - 1):
                    left[labs[i, j]] += 1
                    nl = i + 1
                    nr = n - nl
                    if nl < min_leaf:
                        continue
                    if nr < min_leaf:
                        break
                    if not (vals[i, j] < vals[i + 1, j]):
                        continue
                    for q in range(c):
                        right[q] = parent_counts[q] - left[q]
                    imp_l = _impurity(left, c, nl, criterion, &log_table[0])
                    imp_r = _impurity(right, c, nr, criterion, &log_table[0])
                    gain = parent_impurity - (nl / dn) * imp_l - (nr / dn) * imp_r
                    if gain < 0.0:
                        gain = 0.0
                    if gain > best_gain:
                        best_gain = gain
                        a = vals[i, j]
                        hi = vals[i + 1, j]
                        thr = 0.5 * (a + hi)
                        if thr >= hi:
                            thr = a
                        best_thr = thr
                        best_nl = nl
                if best_nl > 0:
                    gain_out[j] = best_gain
                    thr_out[j] = best_thr
                    left_out[j] = best_nl
    finally:
        free(left)
        free(right)
    return gain_np, thr_np, left_np
