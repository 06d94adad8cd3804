"""Spherical parametrization of point-source directions and the plane z = 1.

``s(u, v) = (cos u sin v, sin u sin v, cos v)`` is a direction from the origin
and ``r(u, v) = s / cos v`` is where that ray meets the plane z = 1, i.e.
``(x, y) = tan v (cos u, sin u)``.
"""

from __future__ import annotations

import numpy as np


def s(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.stack([np.cos(u) * np.sin(v), np.sin(u) * np.sin(v), np.cos(v)], axis=-1)


def s_u(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.stack([-np.sin(u) * np.sin(v), np.cos(u) * np.sin(v), np.zeros(np.broadcast(u, v).shape)], axis=-1)


def s_v(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.stack([np.cos(u) * np.cos(v), np.sin(u) * np.cos(v), -np.sin(v) + 0 * u], axis=-1)


def r(u, v):
    """Polar radius of the plane z = 1; third component is identically 1."""
    return s(u, v) / np.cos(np.asarray(v, dtype=float))[..., None]


def plane_to_uv(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.arctan2(y, x), np.arctan(np.hypot(x, y))


def direction(x, y):
    """Unit direction ``q(x, y) = (x, y, 1) / sqrt(x^2 + y^2 + 1)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.sqrt(x * x + y * y + 1.0)
    return np.stack([x / d, y / d, 1.0 / d], axis=-1)


def cross_norm_su_sv(x, y):
    """``|s_u x s_v| = sin v`` written in plane coordinates."""
    rr = np.hypot(x, y)
    return rr / np.sqrt(rr * rr + 1.0)


def matrix_A_uv(u, v, scale: float = 1.0):
    """``scale * [[-sin u sin v, cos u cos v], [cos u sin v, sin u cos v]]``."""
    su, cu, sv, cv = np.sin(u), np.cos(u), np.sin(v), np.cos(v)
    return scale * np.stack(
        [np.stack([-su * sv, cu * cv], -1), np.stack([cu * sv, su * cv], -1)], -2
    )


def matrix_B_uv(u, v):
    """Derivative of the strike point ``(x, y)`` w.r.t. ``(u, v)``."""
    su, cu, tv, cv = np.sin(u), np.cos(u), np.tan(v), np.cos(v)
    return np.stack(
        [np.stack([-su * tv, cu / cv**2], -1), np.stack([cu * tv, su / cv**2], -1)], -2
    )


def matrix_A(x, y, scale: float = 1.0):
    """``A`` in rectangular coordinates (undefined at x = y = 0)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.sqrt(x * x + y * y + 1.0)
    rr = np.hypot(x, y)
    return scale * np.stack(
        [np.stack([-y / d, x / (d * rr)], -1), np.stack([x / d, y / (d * rr)], -1)], -2
    )


def matrix_B(x, y):
    """``B`` in rectangular coordinates (undefined at x = y = 0)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    q = 1.0 + x * x + y * y
    rr = np.hypot(x, y)
    return np.stack([np.stack([-y, x * q / rr], -1), np.stack([x, y * q / rr], -1)], -2)


def hessian_dq(x, y):
    """Hessian of ``sqrt(x^2 + y^2 + 1)`` via the b(x), c(x) form, shape (..., 2, 2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rho2 = x * x + y * y
    d = np.sqrt(rho2 + 1.0)
    # equals A B^{-1}; the closed form below is regular at the origin
    hxx = (1.0 + y * y) / d**3
    hyy = (1.0 + x * x) / d**3
    hxy = -x * y / d**3
    return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)
