# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the numeric hot kernels.

Mirrors `routekd._kernels_py` function for function; selected by
`routekd.backend` when the extension built successfully.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport M_PI, exp, log, sqrt

cnp.import_array()

NAME = "cython"


def dense_forward(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], m = w.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, m))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, p
    cdef double acc
    with nogil:
        for i in range(n):
            for j in range(m):
                acc = b[j]
                for p in range(d):
                    acc += x[i, p] * w[p, j]
                o[i, j] = acc
    return out


def dense_backward(double[:, ::1] x, double[:, ::1] w, double[:, ::1] dout):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], m = w.shape[1]
    cdef cnp.ndarray[double, ndim=2] dx = np.zeros((n, d))
    cdef cnp.ndarray[double, ndim=2] dw = np.zeros((d, m))
    cdef cnp.ndarray[double, ndim=1] db = np.zeros(m)
    cdef double[:, ::1] dxv = dx
    cdef double[:, ::1] dwv = dw
    cdef double[::1] dbv = db
    cdef Py_ssize_t i, j, p
    cdef double g
    with nogil:
        for i in range(n):
            for j in range(m):
                g = dout[i, j]
                dbv[j] += g
                for p in range(d):
                    dxv[i, p] += g * w[p, j]
                    dwv[p, j] += x[i, p] * g
    return dx, dw, db


def relu_forward(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, d))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(d):
                o[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return out


def relu_backward(double[:, ::1] x, double[:, ::1] dout):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] dx = np.empty((n, d))
    cdef double[:, ::1] o = dx
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(d):
                o[i, j] = dout[i, j] if x[i, j] > 0.0 else 0.0
    return dx


def batchnorm_forward_train(double[:, ::1] x, double[::1] gamma,
                            double[::1] beta, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] y = np.empty((n, d))
    cdef cnp.ndarray[double, ndim=2] xhat = np.empty((n, d))
    cdef cnp.ndarray[double, ndim=1] mean = np.zeros(d)
    cdef cnp.ndarray[double, ndim=1] var = np.zeros(d)
    cdef double[:, ::1] yv = y
    cdef double[:, ::1] xh = xhat
    cdef double[::1] mu = mean
    cdef double[::1] vv = var
    cdef Py_ssize_t i, j
    cdef double diff, inv_std
    with nogil:
        for j in range(d):
            for i in range(n):
                mu[j] += x[i, j]
            mu[j] /= n
            for i in range(n):
                diff = x[i, j] - mu[j]
                vv[j] += diff * diff
            vv[j] /= n
            inv_std = 1.0 / sqrt(vv[j] + eps)
            for i in range(n):
                xh[i, j] = (x[i, j] - mu[j]) * inv_std
                yv[i, j] = gamma[j] * xh[i, j] + beta[j]
    return y, xhat, mean, var


def batchnorm_backward(double[:, ::1] dout, double[:, ::1] xhat,
                       double[::1] var, double[::1] gamma, double eps):
    cdef Py_ssize_t n = dout.shape[0], d = dout.shape[1]
    cdef cnp.ndarray[double, ndim=2] dx = np.empty((n, d))
    cdef cnp.ndarray[double, ndim=1] dgamma = np.zeros(d)
    cdef cnp.ndarray[double, ndim=1] dbeta = np.zeros(d)
    cdef double[:, ::1] dxv = dx
    cdef double[::1] dg = dgamma
    cdef double[::1] db = dbeta
    cdef Py_ssize_t i, j
    cdef double s1, s2, inv_std, dxh
    with nogil:
        for j in range(d):
            s1 = 0.0  # sum of dxhat
            s2 = 0.0  # sum of dxhat * xhat
            for i in range(n):
                dg[j] += dout[i, j] * xhat[i, j]
                db[j] += dout[i, j]
                dxh = dout[i, j] * gamma[j]
                s1 += dxh
                s2 += dxh * xhat[i, j]
            inv_std = 1.0 / sqrt(var[j] + eps)
            for i in range(n):
                dxh = dout[i, j] * gamma[j]
                dxv[i, j] = (inv_std / n) * (n * dxh - s1 - xhat[i, j] * s2)
    return dx, dgamma, dbeta


def softmax_rows(double[:, ::1] z):
    cdef Py_ssize_t n = z.shape[0], d = z.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, d))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double m, s
    with nogil:
        for i in range(n):
            m = z[i, 0]
            for j in range(1, d):
                if z[i, j] > m:
                    m = z[i, j]
            s = 0.0
            for j in range(d):
                o[i, j] = exp(z[i, j] - m)
                s += o[i, j]
            for j in range(d):
                o[i, j] /= s
    return out


def logsumexp_rows(double[:, ::1] z):
    cdef Py_ssize_t n = z.shape[0], d = z.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j
    cdef double m, s
    with nogil:
        for i in range(n):
            m = z[i, 0]
            for j in range(1, d):
                if z[i, j] > m:
                    m = z[i, j]
            s = 0.0
            for j in range(d):
                s += exp(z[i, j] - m)
            o[i] = m + log(s)
    return out


def gmm_log_components(double[:, ::1] x, double[:, ::1] means,
                       double[:, ::1] variances, double[::1] log_weights):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], k = means.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, k))
    cdef double[:, ::1] o = out
    cdef cnp.ndarray[double, ndim=1] norms = np.empty(k)
    cdef double[::1] nv = norms
    cdef Py_ssize_t i, j, p
    cdef double quad, diff, norm
    with nogil:
        for j in range(k):
            norm = log(2.0 * M_PI) * d
            for p in range(d):
                norm += log(variances[j, p])
            nv[j] = norm
        for i in range(n):
            for j in range(k):
                quad = 0.0
                for p in range(d):
                    diff = x[i, p] - means[j, p]
                    quad += diff * diff / variances[j, p]
                o[i, j] = log_weights[j] - 0.5 * (nv[j] + quad)
    return out
