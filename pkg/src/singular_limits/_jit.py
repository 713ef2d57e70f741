"""Compiled inner loops for the built-in systems.

The spatial march of the backward scheme is sequential in x, so it cannot be
vectorised; these kernels run it in numba.  Systems are identified by an
integer kind plus a float parameter vector, which keeps a single cacheable
compilation for all of them.  User-defined systems use the pure-Python path.
"""

import numpy as np
from numba import njit

KIND_LINEAR = 0
KIND_BURGERS = 1
KIND_CHROMATOGRAPHY = 2


@njit(cache=True)
def jacobian(kind, prm, u):
    n = u.shape[0]
    J = np.empty((n, n))
    if kind == KIND_LINEAR:
        for i in range(n):
            for j in range(n):
                J[i, j] = prm[i * n + j]
    elif kind == KIND_BURGERS:
        J[0, 0] = 0.5 + 0.5 * u[0]
    else:
        inv = 1.0 / (1.0 + u[0] + u[1])
        inv2 = inv * inv
        J[0, 0] = inv - u[0] * inv2
        J[0, 1] = -u[0] * inv2
        J[1, 0] = -u[1] * inv2
        J[1, 1] = inv - u[1] * inv2
    return J


@njit(cache=True)
def _solve(J, r):
    n = r.shape[0]
    if n == 1:
        out = np.empty(1)
        out[0] = r[0] / J[0, 0]
        return out
    if n == 2:
        out = np.empty(2)
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        out[0] = (J[1, 1] * r[0] - J[0, 1] * r[1]) / det
        out[1] = (J[0, 0] * r[1] - J[1, 0] * r[0]) / det
        return out
    return np.linalg.solve(J, r)


@njit(cache=True)
def _rhs(kind, prm, u, p):
    return _solve(jacobian(kind, prm, u), p - u)


@njit(cache=True)
def _outside(u, lower, upper):
    for k in range(u.shape[0]):
        if not (u[k] >= lower[k] and u[k] <= upper[k]):
            return True
    return False


@njit(cache=True)
def march(kind, prm, p, left, h, lower, upper):
    """RK4 march of du/dx = A(u)^{-1}(p(x) - u); returns (values, slope, bad_index)."""
    N, n = p.shape
    out = np.empty_like(p)
    slope = np.empty_like(p)
    u = left.copy()
    out[0] = u
    for i in range(N - 1):
        mid = 0.5 * (p[i] + p[i + 1])
        k1 = _rhs(kind, prm, u, p[i])
        slope[i] = k1
        k2 = _rhs(kind, prm, u + 0.5 * h * k1, mid)
        k3 = _rhs(kind, prm, u + 0.5 * h * k2, mid)
        k4 = _rhs(kind, prm, u + h * k3, p[i + 1])
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = u
        if _outside(u, lower, upper):
            return out, slope, i + 1
    slope[N - 1] = _rhs(kind, prm, u, p[N - 1])
    return out, slope, -1


@njit(cache=True)
def _dA(kind, prm, u, d, step):
    """(DA(u) . d) by central differences along the normalised direction."""
    n = u.shape[0]
    norm = 0.0
    for k in range(n):
        norm += d[k] * d[k]
    norm = np.sqrt(norm)
    if norm == 0.0:
        return np.zeros((n, n))
    e = d / norm
    return (jacobian(kind, prm, u + step * e) - jacobian(kind, prm, u - step * e)) * (norm / (2.0 * step))


@njit(cache=True)
def _lin_rhs(kind, prm, u, h, p, q, step):
    J = jacobian(kind, prm, u)
    du = _solve(J, p - u)
    dh = _solve(J, q - h - _dA(kind, prm, u, h, step) @ du)
    return du, dh


@njit(cache=True)
def march_linearized(kind, prm, p, q, left, h, lower, upper, step):
    """March the state and its tangent h_n together (see functionals)."""
    N, n = p.shape
    out = np.empty_like(p)
    tan = np.empty_like(q)
    u = left.copy()
    w = np.zeros(n)
    out[0] = u
    tan[0] = w
    for i in range(N - 1):
        pm = 0.5 * (p[i] + p[i + 1])
        qm = 0.5 * (q[i] + q[i + 1])
        a1, b1 = _lin_rhs(kind, prm, u, w, p[i], q[i], step)
        a2, b2 = _lin_rhs(kind, prm, u + 0.5 * h * a1, w + 0.5 * h * b1, pm, qm, step)
        a3, b3 = _lin_rhs(kind, prm, u + 0.5 * h * a2, w + 0.5 * h * b2, pm, qm, step)
        a4, b4 = _lin_rhs(kind, prm, u + h * a3, w + h * b3, p[i + 1], q[i + 1], step)
        u = u + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        w = w + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        out[i + 1] = u
        tan[i + 1] = w
        if _outside(u, lower, upper):
            return out, tan, i + 1
    return out, tan, -1
