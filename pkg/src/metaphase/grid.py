"""Uniform rectangular node grids and the finite-difference operators on them.

Arrays are indexed ``values[i, j]`` at ``(x0 + i*hx, y0 + j*hy)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FootprintExceeded, FormatError


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    x0: float
    y0: float
    hx: float
    hy: float

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError("grid needs at least 3 nodes per axis")
        if not (self.hx > 0 and self.hy > 0):
            raise ValueError("grid spacing must be positive")

    @classmethod
    def covering(cls, bbox, resolution: int, margin: int = 2) -> "Grid":
        """Square-celled grid with ``resolution`` nodes along the longer side.

        The bounding box ``(xmin, xmax, ymin, ymax)`` is padded by ``margin``
        cells on every side, so centered differences and bilinear lookups are
        available everywhere inside the box.
        """
        xmin, xmax, ymin, ymax = map(float, bbox)
        if resolution < 2 * margin + 3:
            raise ValueError(f"resolution {resolution} too small for margin {margin}")
        span = max(xmax - xmin, ymax - ymin)
        h = span / (resolution - 1 - 2 * margin)
        nx = int(round((xmax - xmin) / h)) + 1 + 2 * margin
        ny = int(round((ymax - ymin) / h)) + 1 + 2 * margin
        cx, cy = 0.5 * (xmin + xmax), 0.5 * (ymin + ymax)
        return cls(nx, ny, cx - 0.5 * (nx - 1) * h, cy - 0.5 * (ny - 1) * h, h, h)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.hx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.hy * np.arange(self.ny)

    @property
    def center(self):
        return (self.x0 + 0.5 * (self.nx - 1) * self.hx, self.y0 + 0.5 * (self.ny - 1) * self.hy)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def center_index(self):
        return (self.nx // 2, self.ny // 2)

    def gradient(self, values):
        """Centered differences inside, second-order one-sided at the edges."""
        gx, gy = np.gradient(np.asarray(values, dtype=float), self.hx, self.hy, edge_order=2)
        return gx, gy

    def hessian(self, values):
        """Centered second differences ``(pxx, pyy, pxy)``; NaN on the outer ring."""
        v = np.asarray(values, dtype=float)
        hx, hy = self.hx, self.hy
        pxx = np.full(v.shape, np.nan)
        pyy = np.full(v.shape, np.nan)
        pxy = np.full(v.shape, np.nan)
        c = v[1:-1, 1:-1]
        pxx[1:-1, 1:-1] = (v[2:, 1:-1] - 2 * c + v[:-2, 1:-1]) / hx**2
        pyy[1:-1, 1:-1] = (v[1:-1, 2:] - 2 * c + v[1:-1, :-2]) / hy**2
        pxy[1:-1, 1:-1] = (v[2:, 2:] - v[2:, :-2] - v[:-2, 2:] + v[:-2, :-2]) / (4 * hx * hy)
        return pxx, pyy, pxy

    def locate(self, x, y):
        """Cell indices and local coordinates of points; raises outside the grid."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s = (x - self.x0) / self.hx
        t = (y - self.y0) / self.hy
        tol = 1e-9
        outside = (s < -tol) | (s > self.nx - 1 + tol) | (t < -tol) | (t > self.ny - 1 + tol)
        outside |= ~(np.isfinite(s) & np.isfinite(t))
        if np.any(outside):
            k = int(np.count_nonzero(outside))
            raise FootprintExceeded(f"{k} point(s) fall outside the {self.nx}x{self.ny} grid")
        i = np.clip(np.floor(s).astype(int), 0, self.nx - 2)
        j = np.clip(np.floor(t).astype(int), 0, self.ny - 2)
        return i, j, s - i, t - j

    def interpolate(self, values, x, y):
        """Bilinear interpolation of node ``values`` (shape ``(nx, ny, ...)``)."""
        v = np.asarray(values)
        i, j, a, b = self.locate(x, y)
        extra = (slice(None),) + (None,) * (v.ndim - 2)
        a = a[extra] if v.ndim > 2 else a
        b = b[extra] if v.ndim > 2 else b
        return (
            (1 - a) * (1 - b) * v[i, j]
            + a * (1 - b) * v[i + 1, j]
            + (1 - a) * b * v[i, j + 1]
            + a * b * v[i + 1, j + 1]
        )

    def compatible(self, other: "Grid", rtol: float = 1e-12) -> bool:
        if self.shape != other.shape:
            return False
        a = np.array([self.x0, self.y0, self.hx, self.hy])
        b = np.array([other.x0, other.y0, other.hx, other.hy])
        return bool(np.allclose(a, b, rtol=rtol, atol=rtol * max(1.0, np.max(np.abs(a)))))


@dataclass
class GridField:
    """Samples of a named scalar quantity on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray
    quantity: str = "value"
    mask: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise FormatError(
                f"{self.quantity}: values have shape {self.values.shape}, grid is {self.grid.shape}"
            )
        if " " in self.quantity or not self.quantity:
            raise ValueError("quantity must be a non-empty token without spaces")

    def gradient(self):
        return self.grid.gradient(self.values)

    def gradient_at(self, x, y):
        """Bilinear interpolation of the centered-difference gradient."""
        gx, gy = self.gradient()
        g = np.stack([gx, gy], axis=-1)
        return self.grid.interpolate(g, x, y)

    def normalized(self, index=None) -> "GridField":
        """Copy shifted so the value at ``index`` (default: grid center) is 0."""
        i, j = index if index is not None else self.grid.center_index()
        return GridField(self.grid, self.values - self.values[i, j], self.quantity, self.mask)
