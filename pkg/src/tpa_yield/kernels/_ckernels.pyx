# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same signatures and results as ``_numpy``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, fabs, log, log1p, INFINITY, isfinite

from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "cython"


cdef inline double _tanh(double x) noexcept nogil:
    # libm tanh is several times slower than expm1; this form keeps full
    # relative accuracy near zero and saturates before expm1 overflows
    cdef double e
    if fabs(x) > 20.0:
        return 1.0 if x > 0 else -1.0
    e = expm1(2.0 * x)
    return e / (e + 2.0)


def mlp_loss_grad(const double[:, ::1] W1, const double[::1] b1,
                  const double[:, ::1] W2, double b2,
                  const double[:, ::1] X, const double[::1] y):
    cdef int n = <int>X.shape[0], R = <int>X.shape[1], S = <int>W1.shape[0]
    cdef Py_ssize_t i, k
    cdef double yhat, r, E = 0.0, db2 = 0.0, scale = 2.0 / n, a, dh
    cdef double one = 1.0, zero = 0.0
    cdef char trans = b'T', notrans = b'N'

    dW1_a = np.zeros((S, R))
    db1_a = np.zeros(S)
    dW2_a = np.zeros((1, S))
    dout_a = np.empty(n)
    dhid_a = np.empty((n, S))
    cdef double[:, ::1] dW1 = dW1_a
    cdef double[::1] db1 = db1_a
    cdef double[:, ::1] dW2 = dW2_a
    cdef double[::1] dout = dout_a
    cdef double[:, ::1] dhid = dhid_a

    if n == 0:
        return 0.0, dW1_a, db1_a, dW2_a, 0.0, dout_a, dhid_a
    with nogil:
        # dhid <- X @ W1.T (row-major), i.e. W1 . X^T in BLAS column-major terms
        if R > 0:
            dgemm(&trans, &notrans, &S, &n, &R, &one, <double*>&W1[0, 0], &R,
                  <double*>&X[0, 0], &R, &zero, &dhid[0, 0], &S)
        else:
            for i in range(n):
                for k in range(S):
                    dhid[i, k] = 0.0
        for i in range(n):
            yhat = b2
            for k in range(S):
                a = _tanh(dhid[i, k] + b1[k])
                dhid[i, k] = a
                yhat = yhat + W2[0, k] * a
            r = yhat - y[i]
            E = E + r * r
            r = scale * r
            dout[i] = r
            db2 = db2 + r
            for k in range(S):
                a = dhid[i, k]
                dW2[0, k] += r * a
                dh = (1.0 - a * a) * r * W2[0, k]
                dhid[i, k] = dh
                db1[k] += dh
        # dW1 <- dhid.T @ X
        if R > 0:
            dgemm(&notrans, &trans, &R, &S, &n, &one, <double*>&X[0, 0], &R,
                  &dhid[0, 0], &S, &zero, &dW1[0, 0], &R)
    return E / n, dW1_a, db1_a, dW2_a, db2, dout_a, dhid_a


cdef inline double _softplus(double x) noexcept nogil:
    if x > 0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double _expit(double x) noexcept nogil:
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    cdef double e = exp(x)
    return e / (1.0 + e)


cdef void _rule_pass(const double[:, ::1] a, const double[:, ::1] b, const double[:, ::1] c,
                     const double[:, ::1] P, const double[:, ::1] X, Py_ssize_t i,
                     double[::1] logw, double[::1] wbar, double[::1] f, double* out) noexcept nogil:
    cdef Py_ssize_t R = a.shape[0], D = a.shape[1], r, j
    cdef double z, s, lw, top = -INFINITY, total = 0.0, acc, o = 0.0
    for r in range(R):
        lw = 0.0
        acc = P[r, 0]
        for j in range(D):
            z = (X[i, j] - c[r, j]) / a[r, j]
            s = z * z
            if s > 0:
                lw = lw - _softplus(b[r, j] * log(s))
            acc = acc + P[r, j + 1] * X[i, j]
        logw[r] = lw
        f[r] = acc
        if lw > top:
            top = lw
    if not isfinite(top):
        for r in range(R):
            wbar[r] = 1.0 / R
    else:
        for r in range(R):
            wbar[r] = exp(logw[r] - top)
            total = total + wbar[r]
        for r in range(R):
            wbar[r] = wbar[r] / total
    for r in range(R):
        o = o + wbar[r] * f[r]
    out[0] = o


def anfis_forward(const double[:, ::1] a, const double[:, ::1] b, const double[:, ::1] c,
                  const double[:, ::1] P, const double[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0], R = a.shape[0], i, r
    w_a = np.empty((n, R))
    wbar_a = np.empty((n, R))
    f_a = np.empty((n, R))
    out_a = np.empty(n)
    cdef double[:, ::1] w = w_a
    cdef double[:, ::1] wbar = wbar_a
    cdef double[:, ::1] f = f_a
    cdef double[::1] out = out_a
    cdef double o
    logw_a = np.empty(R)
    cdef double[::1] logw = logw_a
    with nogil:
        for i in range(n):
            _rule_pass(a, b, c, P, X, i, logw, wbar[i], f[i], &o)
            out[i] = o
            for r in range(R):
                w[i, r] = exp(logw[r])
    return w_a, wbar_a, f_a, out_a


def anfis_premise_grad(const double[:, ::1] a, const double[:, ::1] b, const double[:, ::1] c,
                       const double[:, ::1] P, const double[:, ::1] X, const double[::1] y):
    cdef Py_ssize_t n = X.shape[0], R = a.shape[0], D = a.shape[1], i, r, j
    cdef double o, resid, E = 0.0, g, z, s, log_s, q, two_b
    da_a = np.zeros((R, D))
    db_a = np.zeros((R, D))
    dc_a = np.zeros((R, D))
    cdef double[:, ::1] da = da_a
    cdef double[:, ::1] db = db_a
    cdef double[:, ::1] dc = dc_a
    logw_a = np.empty(R)
    wbar_a = np.empty(R)
    f_a = np.empty(R)
    cdef double[::1] logw = logw_a
    cdef double[::1] wbar = wbar_a
    cdef double[::1] f = f_a
    cdef double scale = 2.0 / n
    with nogil:
        for i in range(n):
            _rule_pass(a, b, c, P, X, i, logw, wbar, f, &o)
            resid = o - y[i]
            E = E + resid * resid
            for r in range(R):
                g = scale * resid * wbar[r] * (f[r] - o)
                if g == 0.0:
                    continue
                for j in range(D):
                    z = (X[i, j] - c[r, j]) / a[r, j]
                    s = z * z
                    if s == 0.0:
                        continue
                    log_s = log(s)
                    q = _expit(b[r, j] * log_s)
                    two_b = 2.0 * b[r, j]
                    da[r, j] += g * two_b * q / a[r, j]
                    dc[r, j] += g * two_b * q / (a[r, j] * z)
                    db[r, j] += g * (-q * log_s)
    return E / n, da_a, db_a, dc_a


def subclust_potential(const double[:, ::1] Xn, double radius):
    cdef Py_ssize_t n = Xn.shape[0], D = Xn.shape[1], i, k, j
    cdef double d2, diff, acc, coef = -4.0 / (radius * radius)
    pot_a = np.empty(n)
    cdef double[::1] pot = pot_a
    with nogil:
        for i in range(n):
            acc = 0.0
            for k in range(n):
                d2 = 0.0
                for j in range(D):
                    diff = Xn[i, j] - Xn[k, j]
                    d2 = d2 + diff * diff
                acc = acc + exp(coef * d2)
            pot[i] = acc
    return pot_a
