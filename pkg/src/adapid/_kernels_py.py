"""Numpy implementation of the inner-loop kernels.

Mirrors ``adapid._kernels`` (Cython) function for function; used whenever the
compiled module is unavailable or ``ADAPID_PURE_PYTHON`` is set.
"""
import numpy as np

POWER = 0
HUBER = 1

# |e| floor used for second derivatives of |e|^p with p < 2
E_FLOOR = 1e-12


def loss_values(kind, param, scale, e):
    a = np.abs(np.asarray(e, dtype=float))
    if kind == POWER:
        return scale * a**param
    h = param
    return scale * np.where(a <= h, 0.5 * a * a, h * (a - 0.5 * h))


def loss_derivatives(kind, param, scale, e):
    e = np.asarray(e, dtype=float)
    a = np.abs(e)
    s = np.sign(e)
    if kind == POWER:
        p = param
        if p == 1.0:
            d1 = s.copy()
            d2 = np.zeros_like(a)
        elif p < 1.0:
            d1 = np.where(a > 0, p * np.maximum(a, E_FLOOR) ** (p - 1.0) * s, 0.0)
            d2 = p * (p - 1.0) * np.maximum(a, E_FLOOR) ** (p - 2.0)
        else:
            d1 = p * a ** (p - 1.0) * s
            if p >= 2.0:
                d2 = p * (p - 1.0) * a ** (p - 2.0)
            else:
                d2 = p * (p - 1.0) * np.maximum(a, E_FLOOR) ** (p - 2.0)
        return scale * d1, scale * d2
    inside = a <= param
    d1 = np.where(inside, e, param * s)
    d2 = inside.astype(float)
    return scale * d1, scale * d2


def data_term(kind, param, scale, X, y, w, theta):
    """Value, gradient and Hessian in theta of sum_k w_k psi(y_k - x_k.theta)."""
    X = np.asarray(X, dtype=float)
    r = np.asarray(y, dtype=float) - X @ np.asarray(theta, dtype=float)
    w = np.asarray(w, dtype=float)
    value = float(np.dot(w, loss_values(kind, param, scale, r)))
    d1, d2 = loss_derivatives(kind, param, scale, r)
    grad = -(X.T @ (w * d1))
    hess = (X * (w * d2)[:, None]).T @ X
    return value, grad, hess


def data_values(kind, param, scale, X, y, w, thetas):
    """sum_k w_k psi(y_k - x_k.theta) for every row theta of ``thetas``."""
    X = np.asarray(X, dtype=float)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    R = np.asarray(y, dtype=float)[:, None] - X @ thetas.T
    return np.asarray(w, dtype=float) @ loss_values(kind, param, scale, R)


def forgetting_scan(lam, b0, inc):
    """b[0] = b0, b[t] = lam * b[t-1] + inc[t-1]."""
    inc = np.asarray(inc, dtype=float)
    out = np.empty(inc.shape[0] + 1)
    out[0] = b0
    acc = float(b0)
    for t in range(inc.shape[0]):
        acc = lam * acc + inc[t]
        out[t + 1] = acc
    return out


def sliding_sums(vals, T):
    """Sums of ``T`` consecutive rows of ``vals``; shape (N - T + 1, m)."""
    vals = np.asarray(vals, dtype=float)
    return np.lib.stride_tricks.sliding_window_view(vals, T, axis=0).sum(axis=-1)
