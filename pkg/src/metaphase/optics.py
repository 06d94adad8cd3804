"""Generalized laws of reflection and refraction at a phase-discontinuity plane.

A ray with unit direction ``x`` meets the interface with unit normal ``nu``.
The interface carries a phase function whose tangential gradient ``grad_psi``
bends the ray in addition to the index change.  The outgoing unit direction
``m`` obeys::

    n1 x - n2 m = lam nu + grad_psi

with ``lam`` fixed by requiring ``|m| = 1`` (minus branch for refraction,
plus branch for reflection, where ``n2 = n1``).

All functions are vectorized: directions have shape ``(..., 3)``, gradients
``(..., 2)`` and broadcast against each other.  The gradient is embedded as
``(gx, gy, 0)``, i.e. the interface is a horizontal plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvanescentRay, NotUnit

UNIT_TOL = 1e-12

E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class MediumPair:
    """Refractive indices on the incident (``n1``) and outgoing (``n2``) side.

    Scalars normally; arrays of per-ray indices broadcast against the ray axes.
    """

    n1: float = 1.0
    n2: float = 1.0

    def __post_init__(self):
        if not (np.all(np.isfinite(self.n1)) and np.all(np.isfinite(self.n2))):
            raise ValueError("refractive indices must be finite")
        if np.any(np.asarray(self.n1) <= 0) or np.any(np.asarray(self.n2) <= 0):
            raise ValueError(f"refractive indices must be positive, got {self.n1}, {self.n2}")

    @property
    def matched(self) -> bool:
        return bool(np.all(np.asarray(self.n1) == np.asarray(self.n2)))


def as_unit(v, name: str = "direction", tol: float = UNIT_TOL) -> np.ndarray:
    """Return ``v`` as a float array of shape (..., 3) after checking unit norm."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1:] != (3,):
        raise NotUnit(f"{name} must have last dimension 3, got shape {v.shape}")
    dev = np.abs(np.sqrt(np.einsum("...i,...i->...", v, v)) - 1.0)
    if not np.all(dev <= tol):
        raise NotUnit(f"{name} is not a unit vector (max norm deviation {np.max(dev):.3e})")
    return v


def embed_gradient(grad_psi) -> np.ndarray:
    """Tangential 2-vector ``(gx, gy)`` -> 3-vector ``(gx, gy, 0)``."""
    g = np.asarray(grad_psi, dtype=float)
    if g.shape[-1:] != (2,):
        raise ValueError(f"grad_psi must have last dimension 2, got shape {g.shape}")
    return np.concatenate([g, np.zeros(g.shape[:-1] + (1,))], axis=-1)


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _law(x, nu, grad_psi, n1, n_out, sign, errors):
    if errors not in ("raise", "nan"):
        raise ValueError("errors must be 'raise' or 'nan'")
    x = as_unit(x, "x")
    nu = as_unit(nu, "nu")
    if np.any(_dot(x, nu) <= 0):
        raise ValueError("incident direction must satisfy x . nu > 0")
    n1 = np.asarray(n1, dtype=float)
    n_out = np.asarray(n_out, dtype=float)
    w = n1[..., None] * x - embed_gradient(grad_psi)
    wn = _dot(w, nu)
    disc = n_out**2 - _dot(w, w) + wn**2
    bad = disc < 0
    if np.any(bad):
        if errors == "raise":
            raise EvanescentRay(
                f"negative discriminant for {int(np.count_nonzero(bad))} ray(s) "
                f"(min {np.min(disc):.3e})"
            )
    with np.errstate(invalid="ignore"):
        lam = wn + sign * np.sqrt(disc)
    m = (w - lam[..., None] * nu) / n_out[..., None]
    return m, lam


def refract(x, nu, grad_psi, media: MediumPair, errors: str = "raise"):
    """Refract ``x`` through a plane with normal ``nu`` and phase gradient ``grad_psi``.

    Parameters
    ----------
    x, nu : array_like, shape (..., 3)
        Unit incident direction and unit normal pointing into medium II
        (``x . nu > 0``).
    grad_psi : array_like, shape (..., 2)
        Tangential phase gradient.
    media : MediumPair
    errors : {"raise", "nan"}
        What to do when no transmitted direction exists.  With ``"nan"`` the
        affected rows of ``m`` and ``lam`` are NaN.

    Returns
    -------
    m : ndarray, shape (..., 3)
        Unit refracted direction, ``m . nu >= 0``.
    lam : ndarray, shape (...)
        Normal multiplier in ``n1 x - n2 m = lam nu + grad_psi``.
    """
    return _law(x, nu, grad_psi, media.n1, media.n2, -1.0, errors)


def reflect(x, nu, grad_psi, n1: float = 1.0, errors: str = "raise"):
    """Reflect ``x`` off a plane with normal ``nu`` and phase gradient ``grad_psi``.

    Same conventions as :func:`refract` with ``n2 = n1``; the reflected
    direction satisfies ``m . nu <= 0`` and
    ``x - m = (lam / n1) nu + grad_psi / n1``.
    """
    if np.any(np.asarray(n1) <= 0):
        raise ValueError("n1 must be positive")
    return _law(x, nu, grad_psi, n1, n1, +1.0, errors)


def tangential_residual(x, m, nu, grad_psi, n1: float, n2: float) -> np.ndarray:
    """Norm of the part of ``n1 x - n2 m - grad_psi`` orthogonal to ``nu``."""
    n1 = np.asarray(n1, dtype=float)[..., None]
    n2 = np.asarray(n2, dtype=float)[..., None]
    r = n1 * np.asarray(x) - n2 * np.asarray(m) - embed_gradient(grad_psi)
    r_t = r - _dot(r, nu)[..., None] * np.asarray(nu)
    return np.linalg.norm(r_t, axis=-1)
