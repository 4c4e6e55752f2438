# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for log-domain Sinkhorn sweeps.

Row/column log-sum-exp with additive scalings is the innermost loop of
the whole solver stack; these loops avoid the temporaries the NumPy
fallback allocates per sweep.
"""

from libc.math cimport exp, log, INFINITY

import numpy as np

COMPILED = True


def row_logsumexp(const double[:, ::1] log_k, const double[::1] log_v,
                  double[::1] out):
    """out[i] = log sum_j exp(log_k[i, j] + log_v[j])."""
    cdef Py_ssize_t k = log_k.shape[0]
    cdef Py_ssize_t n = log_k.shape[1]
    cdef Py_ssize_t i, j
    cdef double m, s, t
    with nogil:
        for i in range(k):
            m = -INFINITY
            for j in range(n):
                t = log_k[i, j] + log_v[j]
                if t > m:
                    m = t
            if m == -INFINITY:
                out[i] = -INFINITY
                continue
            s = 0.0
            for j in range(n):
                s += exp(log_k[i, j] + log_v[j] - m)
            out[i] = m + log(s)
    return np.asarray(out)


def col_logsumexp(const double[:, ::1] log_k, const double[::1] log_u,
                  double[::1] out):
    """out[j] = log sum_i exp(log_k[i, j] + log_u[i])."""
    cdef Py_ssize_t k = log_k.shape[0]
    cdef Py_ssize_t n = log_k.shape[1]
    cdef Py_ssize_t i, j
    cdef double t
    cdef double[::1] mx = np.full(n, -INFINITY)
    cdef double[::1] acc = np.zeros(n)
    with nogil:
        for i in range(k):
            for j in range(n):
                t = log_k[i, j] + log_u[i]
                if t > mx[j]:
                    mx[j] = t
        for i in range(k):
            for j in range(n):
                if mx[j] != -INFINITY:
                    acc[j] += exp(log_k[i, j] + log_u[i] - mx[j])
        for j in range(n):
            if mx[j] == -INFINITY:
                out[j] = -INFINITY
            else:
                out[j] = mx[j] + log(acc[j])
    return np.asarray(out)


def scaled_matrix(const double[:, ::1] log_k, const double[::1] log_u,
                  const double[::1] log_v, double[:, ::1] out):
    """out[i, j] = exp(log_k[i, j] + log_u[i] + log_v[j])."""
    cdef Py_ssize_t k = log_k.shape[0]
    cdef Py_ssize_t n = log_k.shape[1]
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(k):
            for j in range(n):
                out[i, j] = exp(log_k[i, j] + log_u[i] + log_v[j])
    return np.asarray(out)


cdef void _row_lse(const double[:, ::1] log_k, const double[::1] log_v,
                   double[::1] out) noexcept nogil:
    cdef Py_ssize_t k = log_k.shape[0]
    cdef Py_ssize_t n = log_k.shape[1]
    cdef Py_ssize_t i, j
    cdef double m, s, t
    for i in range(k):
        m = -INFINITY
        for j in range(n):
            t = log_k[i, j] + log_v[j]
            if t > m:
                m = t
        if m == -INFINITY:
            out[i] = -INFINITY
            continue
        s = 0.0
        for j in range(n):
            s += exp(log_k[i, j] + log_v[j] - m)
        out[i] = m + log(s)


cdef void _col_lse(const double[:, ::1] log_k, const double[::1] log_u,
                   double[::1] mx, double[::1] acc, double[::1] out) noexcept nogil:
    cdef Py_ssize_t k = log_k.shape[0]
    cdef Py_ssize_t n = log_k.shape[1]
    cdef Py_ssize_t i, j
    cdef double t
    for j in range(n):
        mx[j] = -INFINITY
        acc[j] = 0.0
    for i in range(k):
        for j in range(n):
            t = log_k[i, j] + log_u[i]
            if t > mx[j]:
                mx[j] = t
    for i in range(k):
        for j in range(n):
            if mx[j] != -INFINITY:
                acc[j] += exp(log_k[i, j] + log_u[i] - mx[j])
    for j in range(n):
        if mx[j] == -INFINITY:
            out[j] = -INFINITY
        else:
            out[j] = mx[j] + log(acc[j])


def sinkhorn_loop(const double[:, ::1] log_k, const double[::1] log_r,
                  const double[::1] log_m, double[::1] log_u,
                  double[::1] log_v, double tol, Py_ssize_t max_sweeps,
                  err_hist=None):
    """Alternate row/column rescaling until the scaled kernel's row sums
    match exp(log_r) to relative `tol`.

    log_u/log_v are updated in place.  Returns (sweeps, error, converged);
    the error after each check lands in err_hist when given.  Column sums
    are exact after every column sweep, so only the incoming scalings are
    column-checked (sweep 0).
    """
    cdef Py_ssize_t nr = log_k.shape[0]
    cdef Py_ssize_t nc = log_k.shape[1]
    cdef double[::1] buf_r = np.empty(nr)
    cdef double[::1] buf_c = np.empty(nc)
    cdef double[::1] mx = np.empty(nc)
    cdef double[::1] acc = np.empty(nc)
    cdef double[::1] r = np.exp(log_r)
    cdef double[::1] m = np.exp(log_m)
    cdef double[::1] hist
    cdef bint track = err_hist is not None
    if track:
        hist = err_hist
    cdef double err = INFINITY
    cdef double t, col_err
    cdef Py_ssize_t s, i, j
    cdef bint done = False
    with nogil:
        for s in range(max_sweeps + 1):
            _row_lse(log_k, log_v, buf_r)
            err = 0.0
            for i in range(nr):
                t = (exp(log_u[i] + buf_r[i]) - r[i]) / r[i]
                if t < 0:
                    t = -t
                if t > err:
                    err = t
            if s == 0:
                _col_lse(log_k, log_u, mx, acc, buf_c)
                col_err = 0.0
                for j in range(nc):
                    t = (exp(log_v[j] + buf_c[j]) - m[j]) / m[j]
                    if t < 0:
                        t = -t
                    if t > col_err:
                        col_err = t
                if col_err > err:
                    err = col_err
            if track:
                hist[s] = err
            if err <= tol:
                done = True
                break
            if s == max_sweeps:
                break
            for i in range(nr):
                log_u[i] = log_r[i] - buf_r[i]
            _col_lse(log_k, log_u, mx, acc, buf_c)
            for j in range(nc):
                log_v[j] = log_m[j] - buf_c[j]
    return s, err, done
