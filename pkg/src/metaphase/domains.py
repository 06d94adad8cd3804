"""Planar regions: membership, exact-enough quadrature, uniform sampling.

Quadrature uses Gauss-Legendre nodes in the natural coordinates of each shape
(polar for disks and annuli, tensor for rectangles), so smooth integrands are
integrated to near machine precision with a few hundred nodes per axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

REGION_NAMES = ("full", "empty", "q1", "q2", "q3", "q4", "left", "right", "lower", "upper")

_SECTORS = {
    "full": (0.0, TWO_PI),
    "q1": (0.0, 0.5 * math.pi),
    "q2": (0.5 * math.pi, math.pi),
    "q3": (math.pi, 1.5 * math.pi),
    "q4": (1.5 * math.pi, TWO_PI),
    "upper": (0.0, math.pi),
    "lower": (math.pi, TWO_PI),
    "left": (0.5 * math.pi, 1.5 * math.pi),
    "right": (-0.5 * math.pi, 0.5 * math.pi),
}


def _gl(n, a, b):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * t + 0.5 * (b + a), 0.5 * (b - a) * w


@dataclass(frozen=True)
class Disk:
    """Disk of ``radius`` about ``(cx, cy)``, optionally cut to the sector [a0, a1)."""

    radius: float
    cx: float = 0.0
    cy: float = 0.0
    a0: float = 0.0
    a1: float = TWO_PI

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")
        if not 0 < self.a1 - self.a0 <= TWO_PI + 1e-15:
            raise ValueError("sector angles must satisfy 0 < a1 - a0 <= 2 pi")

    @property
    def full(self) -> bool:
        return self.a1 - self.a0 >= TWO_PI - 1e-15

    @property
    def center(self):
        return (self.cx, self.cy)

    @property
    def convex(self) -> bool:
        return self.a1 - self.a0 <= math.pi + 1e-15 or self.full

    @property
    def bbox(self):
        r = self.radius
        return (self.cx - r, self.cx + r, self.cy - r, self.cy + r)

    @property
    def area(self) -> float:
        return 0.5 * (self.a1 - self.a0) * self.radius**2

    def contains(self, x, y, tol: float = 0.0):
        dx = np.asarray(x) - self.cx
        dy = np.asarray(y) - self.cy
        inside = dx * dx + dy * dy <= (self.radius + tol) ** 2
        if not self.full:
            ang = np.mod(np.arctan2(dy, dx) - self.a0, TWO_PI)
            inside &= ang <= (self.a1 - self.a0)
        return inside

    def signed_distance(self, x, y):
        return np.hypot(np.asarray(x) - self.cx, np.asarray(y) - self.cy) - self.radius

    def boundary_points(self, n: int):
        t = self.a0 + (self.a1 - self.a0) * (np.arange(n) + 0.5) / n
        return self.cx + self.radius * np.cos(t), self.cy + self.radius * np.sin(t)

    def quadrature(self, n: int = 160):
        """Nodes ``(x, y)`` and weights for integrals over the region."""
        r, wr = _gl(n, 0.0, self.radius)
        if self.full:
            t = self.a0 + TWO_PI * np.arange(2 * n) / (2 * n)
            wt = np.full(2 * n, TWO_PI / (2 * n))
        else:
            t, wt = _gl(n, self.a0, self.a1)
        R, Tt = np.meshgrid(r, t, indexing="ij")
        W = np.outer(wr * r, wt)
        return self.cx + R * np.cos(Tt), self.cy + R * np.sin(Tt), W

    def sample(self, rng: np.random.Generator, n: int):
        r = self.radius * np.sqrt(rng.random(n))
        t = self.a0 + (self.a1 - self.a0) * rng.random(n)
        return self.cx + r * np.cos(t), self.cy + r * np.sin(t)

    def region(self, name: str):
        if name == "empty":
            return None
        a0, a1 = _SECTORS[name]
        if name == "full":
            return self
        return Disk(self.radius, self.cx, self.cy, a0, a1)


@dataclass(frozen=True)
class Annulus:
    """Ring ``r_in <= |p - c| <= r_out``; with ``r_in = 0`` it is a disk."""

    r_in: float
    r_out: float
    cx: float = 0.0
    cy: float = 0.0

    def __post_init__(self):
        if not (0 <= self.r_in < self.r_out):
            raise ValueError("annulus radii must satisfy 0 <= r_in < r_out")

    @property
    def convex(self) -> bool:
        return self.r_in == 0

    @property
    def center(self):
        return (self.cx, self.cy)

    @property
    def bbox(self):
        r = self.r_out
        return (self.cx - r, self.cx + r, self.cy - r, self.cy + r)

    @property
    def area(self) -> float:
        return math.pi * (self.r_out**2 - self.r_in**2)

    @property
    def diameter(self) -> float:
        return 2 * self.r_out

    def contains(self, x, y, tol: float = 0.0):
        r = np.hypot(np.asarray(x) - self.cx, np.asarray(y) - self.cy)
        return (r <= self.r_out + tol) & (r >= self.r_in - tol)

    def distance_outside(self, x, y):
        """Euclidean distance to the set (0 inside)."""
        r = np.hypot(np.asarray(x) - self.cx, np.asarray(y) - self.cy)
        return np.maximum(np.maximum(r - self.r_out, self.r_in - r), 0.0)

    def distance_outside_hull(self, x, y):
        """Distance to the convex hull (the outer disk)."""
        r = np.hypot(np.asarray(x) - self.cx, np.asarray(y) - self.cy)
        return np.maximum(r - self.r_out, 0.0)

    def clip(self, x, y):
        """Radially project points onto the closed annulus."""
        dx = np.asarray(x, dtype=float) - self.cx
        dy = np.asarray(y, dtype=float) - self.cy
        r = np.hypot(dx, dy)
        rc = np.clip(r, self.r_in, self.r_out)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(r > 0, rc / r, 1.0)
        return self.cx + dx * s, self.cy + dy * s

    def quadrature(self, n: int = 160):
        r, wr = _gl(n, self.r_in, self.r_out)
        t = TWO_PI * np.arange(2 * n) / (2 * n)
        wt = np.full(2 * n, TWO_PI / (2 * n))
        R, Tt = np.meshgrid(r, t, indexing="ij")
        return self.cx + R * np.cos(Tt), self.cy + R * np.sin(Tt), np.outer(wr * r, wt)

    def sample(self, rng: np.random.Generator, n: int):
        u = rng.random(n)
        r = np.sqrt(self.r_in**2 + u * (self.r_out**2 - self.r_in**2))
        t = TWO_PI * rng.random(n)
        return self.cx + r * np.cos(t), self.cy + r * np.sin(t)


@dataclass(frozen=True)
class Rect:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError("rectangle needs xmin < xmax and ymin < ymax")

    convex = True

    @property
    def center(self):
        return (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))

    @property
    def bbox(self):
        return (self.xmin, self.xmax, self.ymin, self.ymax)

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def contains(self, x, y, tol: float = 0.0):
        x = np.asarray(x)
        y = np.asarray(y)
        return (
            (x >= self.xmin - tol) & (x <= self.xmax + tol)
            & (y >= self.ymin - tol) & (y <= self.ymax + tol)
        )

    def boundary_points(self, n: int):
        w, h = self.xmax - self.xmin, self.ymax - self.ymin
        s = (np.arange(n) + 0.5) / n * 2 * (w + h)
        x = np.empty(n)
        y = np.empty(n)
        legs = [
            (s < w, lambda u: (self.xmin + u, self.ymin)),
            ((s >= w) & (s < w + h), lambda u: (self.xmax, self.ymin + u - w)),
            ((s >= w + h) & (s < 2 * w + h), lambda u: (self.xmax - (u - w - h), self.ymax)),
            (s >= 2 * w + h, lambda u: (self.xmin, self.ymax - (u - 2 * w - h))),
        ]
        for sel, fn in legs:
            px, py = fn(s[sel])
            x[sel] = px
            y[sel] = py
        return x, y

    def signed_distance(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        dx = np.maximum(self.xmin - x, x - self.xmax)
        dy = np.maximum(self.ymin - y, y - self.ymax)
        outside = np.hypot(np.maximum(dx, 0), np.maximum(dy, 0))
        return np.where((dx > 0) | (dy > 0), outside, np.maximum(dx, dy))

    def quadrature(self, n: int = 160):
        x, wx = _gl(n, self.xmin, self.xmax)
        y, wy = _gl(n, self.ymin, self.ymax)
        X, Y = np.meshgrid(x, y, indexing="ij")
        return X, Y, np.outer(wx, wy)

    def sample(self, rng: np.random.Generator, n: int):
        return (
            self.xmin + (self.xmax - self.xmin) * rng.random(n),
            self.ymin + (self.ymax - self.ymin) * rng.random(n),
        )

    def region(self, name: str):
        if name == "empty":
            return None
        if name == "full":
            return self
        cx, cy = self.center
        xs = {"left": (self.xmin, cx), "right": (cx, self.xmax)}
        ys = {"lower": (self.ymin, cy), "upper": (cy, self.ymax)}
        quads = {
            "q1": ((cx, self.xmax), (cy, self.ymax)),
            "q2": ((self.xmin, cx), (cy, self.ymax)),
            "q3": ((self.xmin, cx), (self.ymin, cy)),
            "q4": ((cx, self.xmax), (self.ymin, cy)),
        }
        if name in quads:
            (x0, x1), (y0, y1) = quads[name]
        elif name in xs:
            (x0, x1), (y0, y1) = xs[name], (self.ymin, self.ymax)
        else:
            (x0, x1), (y0, y1) = (self.xmin, self.xmax), ys[name]
        return Rect(x0, x1, y0, y1)


def integrate(domain, func, n: int = 160) -> float:
    """Integral of ``func(x, y)`` over ``domain`` by Gauss-Legendre quadrature."""
    x, y, w = domain.quadrature(n)
    return float(np.sum(func(x, y) * w))


def coverage(domain, grid, sub: int = 8):
    """Fraction of each node's dual cell covered by ``domain`` (sub x sub samples)."""
    offs = (np.arange(sub) + 0.5) / sub - 0.5
    X = grid.x[:, None, None, None] + grid.hx * offs[None, None, :, None]
    Y = grid.y[None, :, None, None] + grid.hy * offs[None, None, None, :]
    return domain.contains(X, Y).mean(axis=(2, 3))


def cell_integrals(domain, grid, func, sub: int = 8):
    """Integral of ``func`` over each dual cell intersected with ``domain`` (midpoint rule)."""
    offs = (np.arange(sub) + 0.5) / sub - 0.5
    X = grid.x[:, None, None, None] + grid.hx * offs[None, None, :, None]
    Y = grid.y[None, :, None, None] + grid.hy * offs[None, None, None, :]
    X, Y = np.broadcast_arrays(X, Y)
    inside = domain.contains(X, Y)
    vals = np.zeros(X.shape)
    vals[inside] = func(X[inside], Y[inside])
    return vals.mean(axis=(2, 3)) * grid.hx * grid.hy
