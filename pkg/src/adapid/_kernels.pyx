# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for loss sums over the identifier history.

Same signatures and semantics as ``adapid._kernels_py``.
"""
import numpy as np

from libc.math cimport fabs, pow, sqrt

cdef enum:
    POWER_KIND = 0
    HUBER_KIND = 1

POWER = POWER_KIND
HUBER = HUBER_KIND

cdef double E_FLOOR_C = 1e-12
E_FLOOR = E_FLOOR_C


cdef inline double _sign(double e) noexcept nogil:
    # branch free; random signs defeat the branch predictor
    return <double>(e > 0) - <double>(e < 0)


cdef inline double _value(int kind, double param, double scale, double e) noexcept nogil:
    cdef double a = fabs(e)
    if kind == POWER_KIND:
        if param == 2.0:
            return scale * a * a
        if param == 1.0:
            return scale * a
        if param == 0.5:
            return scale * sqrt(a)
        return scale * pow(a, param)
    if a <= param:
        return scale * 0.5 * a * a
    return scale * param * (a - 0.5 * param)


cdef inline void _derivs(int kind, double param, double scale, double e,
                         double* d1, double* d2) noexcept nogil:
    cdef double a = fabs(e)
    cdef double s = _sign(e)
    cdef double p = param
    cdef double af
    if kind == POWER_KIND:
        if p == 2.0:
            d1[0] = scale * 2.0 * e
            d2[0] = scale * 2.0
        elif p == 1.0:
            d1[0] = scale * s
            d2[0] = 0.0
        elif p == 0.5:
            af = sqrt(a if a > E_FLOOR_C else E_FLOOR_C)
            d1[0] = scale * 0.5 / af * s if a > 0 else 0.0
            d2[0] = -scale * 0.25 / (af * af * af)
        elif p < 1.0:
            af = a if a > E_FLOOR_C else E_FLOOR_C
            d1[0] = scale * p * pow(af, p - 1.0) * s if a > 0 else 0.0
            d2[0] = scale * p * (p - 1.0) * pow(af, p - 2.0)
        elif p > 2.0:
            d1[0] = scale * p * pow(a, p - 1.0) * s
            d2[0] = scale * p * (p - 1.0) * pow(a, p - 2.0)
        else:
            af = a if a > E_FLOOR_C else E_FLOOR_C
            d1[0] = scale * p * pow(a, p - 1.0) * s
            d2[0] = scale * p * (p - 1.0) * pow(af, p - 2.0)
    else:
        if a <= param:
            d1[0] = scale * e
            d2[0] = scale
        else:
            d1[0] = scale * param * s
            d2[0] = 0.0


def loss_values(int kind, double param, double scale, e):
    arr = np.asarray(e, dtype=np.float64)
    flat = np.ascontiguousarray(arr).reshape(-1)
    out = np.empty_like(flat)
    cdef double[::1] src = flat
    cdef double[::1] dst = out
    cdef Py_ssize_t i, m = src.shape[0]
    with nogil:
        for i in range(m):
            dst[i] = _value(kind, param, scale, src[i])
    return out.reshape(arr.shape)


def loss_derivatives(int kind, double param, double scale, e):
    arr = np.asarray(e, dtype=np.float64)
    flat = np.ascontiguousarray(arr).reshape(-1)
    o1 = np.empty_like(flat)
    o2 = np.empty_like(flat)
    cdef double[::1] src = flat
    cdef double[::1] a1 = o1
    cdef double[::1] a2 = o2
    cdef Py_ssize_t i, m = src.shape[0]
    cdef double d1, d2
    with nogil:
        for i in range(m):
            _derivs(kind, param, scale, src[i], &d1, &d2)
            a1[i] = d1
            a2[i] = d2
    return o1.reshape(arr.shape), o2.reshape(arr.shape)


def data_term(int kind, double param, double scale, X, y, w, theta):
    """Value, gradient and Hessian in theta of sum_k w_k psi(y_k - x_k.theta)."""
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t N = Xv.shape[0], n = Xv.shape[1]
    grad_arr = np.zeros(n)
    hess_arr = np.zeros((n, n))
    cdef double[::1] g = grad_arr
    cdef double[:, ::1] H = hess_arr
    cdef Py_ssize_t k, i, j
    cdef double r, d1, d2, wk, c, value = 0.0
    with nogil:
        for k in range(N):
            wk = wv[k]
            r = yv[k]
            for i in range(n):
                r -= Xv[k, i] * th[i]
            value += wk * _value(kind, param, scale, r)
            _derivs(kind, param, scale, r, &d1, &d2)
            c = wk * d1
            for i in range(n):
                g[i] -= c * Xv[k, i]
            c = wk * d2
            if c != 0.0:
                for i in range(n):
                    for j in range(i, n):
                        H[i, j] += c * Xv[k, i] * Xv[k, j]
        for i in range(n):
            for j in range(i):
                H[i, j] = H[j, i]
    return value, grad_arr, hess_arr


def data_values(int kind, double param, double scale, X, y, w, thetas):
    """sum_k w_k psi(y_k - x_k.theta) for every row theta of ``thetas``."""
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, ::1] Th = np.ascontiguousarray(np.atleast_2d(thetas), dtype=np.float64)
    cdef Py_ssize_t N = Xv.shape[0], n = Xv.shape[1], m = Th.shape[0]
    out_arr = np.zeros(m)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, i, q
    cdef double r
    with nogil:
        for k in range(N):
            for q in range(m):
                r = yv[k]
                for i in range(n):
                    r -= Xv[k, i] * Th[q, i]
                out[q] += wv[k] * _value(kind, param, scale, r)
    return out_arr


def forgetting_scan(double lam, double b0, inc):
    """b[0] = b0, b[t] = lam * b[t-1] + inc[t-1]."""
    cdef double[::1] iv = np.ascontiguousarray(inc, dtype=np.float64)
    cdef Py_ssize_t N = iv.shape[0], t
    out_arr = np.empty(N + 1)
    cdef double[::1] out = out_arr
    cdef double acc = b0
    out[0] = b0
    with nogil:
        for t in range(N):
            acc = lam * acc + iv[t]
            out[t + 1] = acc
    return out_arr


def sliding_sums(vals, Py_ssize_t T):
    """Sums of ``T`` consecutive rows of ``vals``; shape (N - T + 1, m)."""
    arr = np.asarray(vals, dtype=np.float64)
    squeeze = arr.ndim == 1
    cdef double[:, ::1] V = np.ascontiguousarray(arr.reshape(arr.shape[0], -1))
    cdef Py_ssize_t N = V.shape[0], m = V.shape[1], i, k, j
    out_arr = np.zeros((N - T + 1, m))
    cdef double[:, ::1] out = out_arr
    cdef double acc
    # direct sums rather than a running difference, which drifts
    with nogil:
        for j in range(m):
            for i in range(N - T + 1):
                acc = 0.0
                for k in range(i, i + T):
                    acc += V[k, j]
                out[i, j] = acc
    if squeeze:
        return out_arr[:, 0]
    return out_arr
