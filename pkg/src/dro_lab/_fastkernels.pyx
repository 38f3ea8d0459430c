# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: Gaussian Gram blocks and condensed pairwise distances.

Semantics mirror dro_lab._numpykernels exactly (up to floating summation
order); the backend module picks whichever is importable.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()


def gaussian_gram(double[:, ::1] X, double[:, ::1] Y, double inv_sigma_sq):
    """Gram block K[i, j] = exp(-||x_i - y_j||^2 * inv_sigma_sq)."""
    cdef Py_ssize_t n = X.shape[0], m = Y.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] K = out
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = X[i, k] - Y[j, k]
                acc += diff * diff
            K[i, j] = exp(-acc * inv_sigma_sq)
    return out


def pairwise_dists_condensed(double[:, ::1] X):
    """Euclidean distances ||x_i - x_j|| for i < j, in row-major pair order."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k, pos = 0
    cdef double acc, diff
    out = np.empty(n * (n - 1) // 2, dtype=np.float64)
    cdef double[::1] D = out
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = X[i, k] - X[j, k]
                acc += diff * diff
            D[pos] = sqrt(acc)
            pos += 1
    return out
