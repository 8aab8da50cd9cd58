# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_core_py`` for the reference numpy versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, sqrt, M_PI

cnp.import_array()


cdef inline double _k1(double x) nogil:
    return x - 0.5


cdef inline double _k2(double x) nogil:
    cdef double k1 = x - 0.5
    return 0.5 * (k1 * k1 - 1.0 / 12.0)


cdef inline double _k4(double x) nogil:
    cdef double k1 = x - 0.5
    cdef double k1sq = k1 * k1
    return (k1sq * k1sq - 0.5 * k1sq + 7.0 / 240.0) / 24.0


def sobolev_gram(X, Y):
    cdef double[:, ::1] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], m = yv.shape[0], p = xv.shape[1]
    cdef Py_ssize_t i, k, j
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double acc, s, u
    with nogil:
        for i in range(n):
            for k in range(m):
                acc = 1.0
                for j in range(p):
                    s = xv[i, j]
                    u = yv[k, j]
                    acc *= 1.0 + _k1(s) * _k1(u) + _k2(s) * _k2(u) - _k4(fabs(s - u))
                ov[i, k] = acc
    return out


def gaussian_smoother(U, V, bandwidth):
    cdef double[:, ::1] uv = np.ascontiguousarray(U, dtype=np.float64)
    cdef double[:, ::1] vv = np.ascontiguousarray(V, dtype=np.float64)
    cdef double[::1] c = np.ascontiguousarray(bandwidth, dtype=np.float64)
    cdef Py_ssize_t n = uv.shape[0], m = vv.shape[0], p = uv.shape[1]
    cdef Py_ssize_t i, k, j
    cdef double norm = 1.0
    for j in range(p):
        norm *= c[j] * sqrt(2.0 * M_PI)
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double e, d
    with nogil:
        for i in range(n):
            for k in range(m):
                e = 0.0
                for j in range(p):
                    d = (uv[i, j] - vv[k, j]) / c[j]
                    e -= 0.5 * d * d
                ov[i, k] = exp(e) / norm
    return out


def secular_top_root(s, delta, double rho, double tol=1e-14, int max_iter=200):
    cdef double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(delta, dtype=np.float64)
    cdef Py_ssize_t n = sv.shape[0], k
    cdef double lo, dmin, psi, dpsi, q, mu, F, dF, step
    cdef bint any_pos = False
    cdef int it
    dmin = dv[0]
    lo = rho * sv[0] - dv[0]
    for k in range(n):
        if dv[k] < dmin:
            dmin = dv[k]
        if rho * sv[k] - dv[k] > lo:
            lo = rho * sv[k] - dv[k]
        if sv[k] > 0:
            any_pos = True
    if -dmin > lo:
        lo = -dmin
    if not any_pos:
        return lo
    mu = lo
    for it in range(max_iter):
        psi = 0.0
        dpsi = 0.0
        for k in range(n):
            q = sv[k] / (mu + dv[k])
            psi += q
            dpsi += q / (mu + dv[k])
        psi *= rho
        dpsi *= rho
        F = 1.0 / psi - 1.0
        if F >= 0.0 and mu == lo:
            return mu
        dF = dpsi / (psi * psi)
        step = -F / dF
        mu += step
        if fabs(step) <= tol * max(1.0, fabs(mu)):
            break
    return mu


cdef inline double _logaddexp0(double x) nogil:
    # log(1 + exp(x))
    if x > 0:
        return x + log(1.0 + exp(-x))
    return log(1.0 + exp(x))


cdef inline double _expit(double x) nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def surrogate_terms(score, omega_pos, omega_neg, row_weight):
    cdef double[::1] g = np.ascontiguousarray(score, dtype=np.float64)
    cdef double[::1] op = np.ascontiguousarray(omega_pos, dtype=np.float64)
    cdef double[::1] on = np.ascontiguousarray(omega_neg, dtype=np.float64)
    cdef double[::1] wt = np.ascontiguousarray(row_weight, dtype=np.float64)
    cdef Py_ssize_t n = g.shape[0], i
    loss = np.empty(n, dtype=np.float64)
    grad = np.empty(n, dtype=np.float64)
    cdef double[::1] lv = loss
    cdef double[::1] gv = grad
    cdef double sp, sn, xp, xn
    with nogil:
        for i in range(n):
            sp = 1.0 if op[i] >= 0 else -1.0
            sn = 1.0 if on[i] >= 0 else -1.0
            xp = sp * g[i]
            xn = -sn * g[i]
            lv[i] = wt[i] * (fabs(op[i]) * _logaddexp0(-xp) + fabs(on[i]) * _logaddexp0(-xn))
            gv[i] = wt[i] * (-op[i] * _expit(-xp) + on[i] * _expit(-xn))
    return loss, grad
