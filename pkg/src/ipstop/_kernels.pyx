# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled single-pass kernels for the instrumented Krylov inner loops.

Mirrors ``_kernels_py.py``; the fused passes avoid the temporaries the numpy
fallback allocates on every inner iteration.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, sqrt

COMPILED = True


def step_to_boundary(double[::1] v, double[::1] dv):
    """Largest alpha with v + alpha*dv >= 0, for v > 0 (inf if unblocked)."""
    cdef Py_ssize_t j, n = v.shape[0]
    cdef double amax = INFINITY
    cdef double r
    for j in range(n):
        if dv[j] < 0.0:
            r = -v[j] / dv[j]
            if r < amax:
                amax = r
    return amax


def max_abs_ratio(double[::1] num, double[::1] den):
    """max_j |num_j| / den_j for den > 0 (0.0 for empty input)."""
    cdef Py_ssize_t j, n = num.shape[0]
    cdef double m = 0.0
    cdef double r
    for j in range(n):
        r = fabs(num[j]) / den[j]
        if r > m:
            m = r
    return m


def stepped_dot(double[::1] a, double[::1] da, double ax,
                double[::1] b, double[::1] db, double bs):
    """sum_j (a_j + ax*da_j) * (b_j + bs*db_j)."""
    cdef Py_ssize_t j, n = a.shape[0]
    cdef double acc = 0.0
    for j in range(n):
        acc += (a[j] + ax * da[j]) * (b[j] + bs * db[j])
    return acc


def axpby_norm(double[::1] base, double c1, double[::1] v1):
    """2-norm of -base + c1*v1."""
    cdef Py_ssize_t j, n = base.shape[0]
    cdef double acc = 0.0
    cdef double t
    for j in range(n):
        t = c1 * v1[j] - base[j]
        acc += t * t
    return sqrt(acc)


def axpbypcz_norm(double[::1] base, double c1, double[::1] v1,
                  double c2, double[::1] v2):
    """2-norm of -base + c1*v1 + c2*v2."""
    cdef Py_ssize_t j, n = base.shape[0]
    cdef double acc = 0.0
    cdef double t
    for j in range(n):
        t = c1 * v1[j] + c2 * v2[j] - base[j]
        acc += t * t
    return sqrt(acc)


def reconstruct_ne(double[::1] v1, double[::1] v2, double[::1] theta,
                   double[::1] theta_inv, double[::1] xi1_t,
                   double[::1] out_dx, double[::1] out_ds):
    """dx = v2 + theta*xi1_t; ds = v1 - theta_inv*dx (nonnegative-bound path)."""
    cdef Py_ssize_t j, n = v1.shape[0]
    cdef double dx
    for j in range(n):
        dx = v2[j] + theta[j] * xi1_t[j]
        out_dx[j] = dx
        out_ds[j] = v1[j] - theta_inv[j] * dx
