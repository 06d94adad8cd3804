"""The four design scenarios and their reduction to one transport problem.

Every scenario (collimated or point source, reflecting or refracting plane
z = 1) is solved through the convex potential::

    phi = (n1 * d_Q - psi) / n2

where ``d_Q`` is the distance travelled from the source to the plane (1 for a
collimated beam, ``sqrt(x^2 + y^2 + 1)`` for a source at the origin).  The
outgoing direction is then ``T = (phi_x, phi_y, sigma * sqrt(1 - |grad phi|^2))``
with ``sigma = -1`` for reflection and ``+1`` for refraction, so all four
problems become ``det D^2 phi = f1(x) / f2(grad phi)`` with ``grad phi``
mapping the source footprint D1 onto the horizontal projection D2 of the
target cap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import sphere
from .domains import Annulus, Disk, Rect, cell_integrals, integrate
from .errors import DomainTouchesEquator, EvanescentRay, MassImbalance
from .grid import Grid, GridField
from .optics import MediumPair

MAX_CAP_ANGLE = math.radians(80.0)
MASS_RTOL = 1e-6

REFLECT, REFRACT = "reflect", "refract"
COLLIMATED, POINT = "collimated", "point"


# --------------------------------------------------------------------------
# intensities


@dataclass(frozen=True)
class Profile:
    """Radially symmetric intensity: ``uniform`` or ``gaussian`` in one variable.

    The variable is the distance from the source disk center (collimated
    sources) or the polar angle from the axis (point sources and targets).
    """

    kind: str = "uniform"
    amplitude: float = 1.0
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian"):
            raise ValueError(f"unknown intensity profile {self.kind!r}")
        if self.kind == "gaussian" and not (self.sigma and self.sigma > 0):
            raise ValueError("gaussian profile needs sigma > 0")
        if not self.amplitude > 0:
            raise ValueError("intensity amplitude must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "uniform":
            return np.full(t.shape, self.amplitude)
        return self.amplitude * np.exp(-0.5 * (t / self.sigma) ** 2)

    def scaled(self, k: float) -> "Profile":
        return replace(self, amplitude=self.amplitude * k)


@dataclass(frozen=True)
class SampledIntensity:
    """Intensity tabulated on a grid, bilinearly interpolated, clipped at 0."""

    field: GridField

    def __call__(self, x, y):
        g = self.field.grid
        xc = np.clip(x, g.x0, g.x0 + (g.nx - 1) * g.hx)
        yc = np.clip(y, g.y0, g.y0 + (g.ny - 1) * g.hy)
        return np.maximum(g.interpolate(self.field.values, xc, yc), 0.0)

    def scaled(self, k: float) -> "SampledIntensity":
        return SampledIntensity(GridField(self.field.grid, self.field.values * k, self.field.quantity))


# --------------------------------------------------------------------------
# source / target


@dataclass(frozen=True)
class SourceSpec:
    """Incident light: a collimated beam from a region of z = 0 or rays from the origin.

    For ``kind="point"`` the ``domain`` is the footprint D on the plane z = 1
    and ``intensity`` is power per unit solid angle of the direction
    ``q(x, y)``; for ``kind="collimated"`` it is power per unit area.
    """

    kind: str
    domain: Disk | Rect
    intensity: Profile | SampledIntensity = Profile()

    def __post_init__(self):
        if self.kind not in (COLLIMATED, POINT):
            raise ValueError(f"source kind must be 'collimated' or 'point', got {self.kind!r}")

    @property
    def radial_center(self):
        return (0.0, 0.0) if self.kind == POINT else self.domain.center

    @property
    def is_radial(self) -> bool:
        """Intensity and domain both symmetric about the radial center."""
        if not isinstance(self.intensity, Profile) or not isinstance(self.domain, Disk):
            return False
        return self.domain.full and self.domain.center == self.radial_center

    def intensity_at(self, x, y):
        """``f`` at the strike point (collimated) or at direction ``q(x, y)`` (point)."""
        if isinstance(self.intensity, SampledIntensity):
            return self.intensity(x, y)
        cx, cy = self.radial_center
        rr = np.hypot(np.asarray(x) - cx, np.asarray(y) - cy)
        return self.intensity(np.arctan(rr) if self.kind == POINT else rr)

    def density(self, x, y):
        """Plane density ``f1``: power per unit area of the footprint."""
        f = self.intensity_at(x, y)
        if self.kind == POINT:
            f = f / (1.0 + np.asarray(x) ** 2 + np.asarray(y) ** 2) ** 1.5
        return f

    def power(self, n: int = 200) -> float:
        return integrate(self.domain, self.density, n)

    def incident(self, x, y):
        if self.kind == POINT:
            return sphere.direction(x, y)
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        out = np.zeros(shape + (3,))
        out[..., 2] = 1.0
        return out

    def scaled(self, k: float) -> "SourceSpec":
        return replace(self, intensity=self.intensity.scaled(k))


@dataclass(frozen=True)
class TargetSpec:
    """Far-field cap (or band) about ``axis * e3``: polar angles in [theta_min, theta_max]."""

    axis: int
    theta_max: float
    theta_min: float = 0.0
    intensity: Profile = Profile()

    def __post_init__(self):
        if self.axis not in (-1, 1):
            raise ValueError("cap axis sign must be +1 or -1")
        if self.theta_max >= 0.5 * math.pi:
            raise DomainTouchesEquator(
                f"target cap reaches equator (theta_max={self.theta_max} rad >= pi/2)"
            )
        if self.theta_max > MAX_CAP_ANGLE + 1e-12:
            raise DomainTouchesEquator(
                f"theta_max={math.degrees(self.theta_max):.3f} deg exceeds the 80 deg limit"
            )
        if not 0.0 <= self.theta_min < self.theta_max:
            raise ValueError("cap angles must satisfy 0 <= theta_min < theta_max")
        if not isinstance(self.intensity, Profile):
            raise TypeError("target intensity must be an analytic Profile")

    @property
    def rho_min(self) -> float:
        return math.sin(self.theta_min)

    @property
    def rho_max(self) -> float:
        return math.sin(self.theta_max)

    @property
    def projected(self) -> Annulus:
        """Horizontal projection of the cap onto the unit disk."""
        return Annulus(self.rho_min, self.rho_max)

    @property
    def solid_angle(self) -> float:
        return 2 * math.pi * (math.cos(self.theta_min) - math.cos(self.theta_max))

    def polar_angle(self, d):
        d = np.asarray(d, dtype=float)
        return np.arccos(np.clip(self.axis * d[..., 2], -1.0, 1.0))

    def contains(self, d, tol: float = 0.0):
        th = self.polar_angle(d)
        return (th >= self.theta_min - tol) & (th <= self.theta_max + tol)

    def g(self, d, clamp: bool = False):
        """Intensity per unit solid angle at unit direction(s) ``d``.

        Outside the cap the value is 0, unless ``clamp`` is set, in which case
        the polar angle is clamped to the cap's range first.
        """
        th = self.polar_angle(d)
        if clamp:
            return self.intensity(np.clip(th, self.theta_min, self.theta_max))
        inside = (th >= self.theta_min) & (th <= self.theta_max)
        return np.where(inside, self.intensity(th), 0.0)

    def f2(self, p1, p2):
        """Projected density ``g(p, sigma sqrt(1-|p|^2)) / sqrt(1-|p|^2)``.

        Evaluated with ``|p|`` clamped to the projected band so that slightly
        out-of-range gradients still get a finite value.
        """
        rho = np.clip(np.hypot(p1, p2), self.rho_min, self.rho_max)
        return self.intensity(np.arcsin(rho)) / np.sqrt(1.0 - rho * rho)

    def power(self, n: int = 400) -> float:
        t, w = np.polynomial.legendre.leggauss(n)
        th = 0.5 * (self.theta_max - self.theta_min) * t + 0.5 * (self.theta_max + self.theta_min)
        w = 0.5 * (self.theta_max - self.theta_min) * w
        return float(2 * math.pi * np.sum(self.intensity(th) * np.sin(th) * w))

    def scaled(self, k: float) -> "TargetSpec":
        return replace(self, intensity=self.intensity.scaled(k))


@dataclass(frozen=True)
class Scenario:
    transport: str
    source: SourceSpec
    target: TargetSpec
    media: MediumPair = MediumPair()

    def __post_init__(self):
        if self.transport not in (REFLECT, REFRACT):
            raise ValueError(f"transport must be 'reflect' or 'refract', got {self.transport!r}")
        if self.transport == REFLECT and not self.media.matched:
            raise ValueError("reflection requires n1 == n2")
        want = -1 if self.transport == REFLECT else 1
        if self.target.axis != want:
            side = "lower" if want < 0 else "upper"
            raise ValueError(f"{self.transport} scenarios need a target cap in the {side} hemisphere")

    @property
    def sigma(self) -> int:
        return -1 if self.transport == REFLECT else 1

    @property
    def name(self) -> str:
        return f"{self.source.kind}-{self.transport}"

    def d_q(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.source.kind == COLLIMATED:
            return np.ones(np.broadcast(x, y).shape)
        return np.sqrt(x * x + y * y + 1.0)

    def t_map(self, x, y, grad_psi, errors: str = "raise"):
        """Outgoing direction for a ray striking ``(x, y, 1)`` under phase gradient ``grad_psi``."""
        n1, n2 = self.media.n1, self.media.n2
        if self.source.kind == COLLIMATED:
            if self.transport == REFLECT:
                return collimated_reflection_T(grad_psi, n1=n1, errors=errors)
            return collimated_refraction_T(grad_psi, self.media, errors=errors)
        if self.transport == REFLECT:
            return point_reflection_T(x, y, grad_psi, n1=n1, errors=errors)
        return point_refraction_T(x, y, grad_psi, self.media, errors=errors)

    def with_target_scaled(self, k: float) -> "Scenario":
        return replace(self, target=self.target.scaled(k))


# --------------------------------------------------------------------------
# T maps


def _finish(a1, a2, n, sign, errors, what):
    """``(a1, a2, sign * sqrt(n^2 - a1^2 - a2^2)) / n``; evanescent when the root is not positive."""
    if errors not in ("raise", "nan"):
        raise ValueError("errors must be 'raise' or 'nan'")
    disc = n * n - a1 * a1 - a2 * a2
    bad = ~(disc > 0)
    if np.any(bad) and errors == "raise":
        raise EvanescentRay(f"{what}: {int(np.count_nonzero(bad))} ray(s) have no outgoing direction")
    with np.errstate(invalid="ignore"):
        t3 = sign * np.sqrt(disc) / n
    T = np.stack(np.broadcast_arrays(a1 / n, a2 / n, t3), axis=-1).astype(float)
    if np.any(bad):
        T[bad] = np.nan
    return T


def _grad(grad_psi):
    g = np.asarray(grad_psi, dtype=float)
    if g.shape[-1:] != (2,):
        raise ValueError(f"grad_psi must have last dimension 2, got shape {g.shape}")
    return g[..., 0], g[..., 1]


def collimated_reflection_T(grad_psi, n1: float = 1.0, errors: str = "raise"):
    """``T = -(psi_x, psi_y, sqrt(1 - |grad psi|^2))`` (with ``grad psi / n1`` for n1 != 1)."""
    gx, gy = _grad(grad_psi)
    return _finish(-gx, -gy, n1, -1.0, errors, "collimated reflection")


def collimated_refraction_T(grad_psi, media: MediumPair, errors: str = "raise"):
    """``T = (-grad psi / n2, sqrt(1 - |grad psi|^2 / n2^2))``; needs ``|grad psi| < n2``."""
    gx, gy = _grad(grad_psi)
    return _finish(-gx, -gy, media.n2, 1.0, errors, "collimated refraction")


def point_reflection_T(x, y, grad_psi, n1: float = 1.0, errors: str = "raise"):
    """``T = (x/d - psi_x, y/d - psi_y, -sqrt(Delta))`` with ``d = sqrt(x^2 + y^2 + 1)``."""
    gx, gy = _grad(grad_psi)
    d = np.sqrt(np.asarray(x) ** 2 + np.asarray(y) ** 2 + 1.0)
    return _finish(n1 * x / d - gx, n1 * y / d - gy, n1, -1.0, errors, "point reflection")


def point_refraction_T(x, y, grad_psi, media: MediumPair, errors: str = "raise"):
    """``T = ((n1 x/d - psi_x)/n2, (n1 y/d - psi_y)/n2, sqrt(Delta)/n2)``."""
    gx, gy = _grad(grad_psi)
    n1 = media.n1
    d = np.sqrt(np.asarray(x) ** 2 + np.asarray(y) ** 2 + 1.0)
    return _finish(n1 * x / d - gx, n1 * y / d - gy, media.n2, 1.0, errors, "point refraction")


# --------------------------------------------------------------------------
# PDE forms


def potential_derivatives(scenario: Scenario, x, y, grad_psi, hess_psi):
    """Gradient and Hessian of ``phi = (n1 d_Q - psi) / n2`` from those of ``psi``."""
    n1, n2 = scenario.media.n1, scenario.media.n2
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    g = np.asarray(grad_psi, dtype=float)
    H = np.asarray(hess_psi, dtype=float)
    if scenario.source.kind == POINT:
        d = np.sqrt(x * x + y * y + 1.0)
        gd = np.stack([x / d, y / d], -1)
        Hd = sphere.hessian_dq(x, y)
    else:
        gd = np.zeros(g.shape)
        Hd = np.zeros(H.shape)
    return (n1 * gd - g) / n2, (n1 * Hd - H) / n2


def scenario_pde_lhs(scenario: Scenario, x, y, grad_psi, hess_psi):
    """Left-hand side of each scenario's own equation, written in terms of ``psi``.

    Collimated cases use ``|det D^2(psi/n)| / sqrt(1 - |grad psi / n|^2)`` with
    ``n = n1`` (reflection) or ``n2`` (refraction).  Point-source cases use the
    Jacobian ratio ``|det(A - D^2 psi B / n)| / (|T_3| |s_u x s_v|)`` with the
    rectangular-coordinate matrices A and B.
    """
    n1, n2 = scenario.media.n1, scenario.media.n2
    H = np.asarray(hess_psi, dtype=float)
    g = np.asarray(grad_psi, dtype=float)
    if scenario.source.kind == COLLIMATED:
        n = n1 if scenario.transport == REFLECT else n2
        det = np.linalg.det(H / n)
        return np.abs(det) / np.sqrt(1.0 - np.sum((g / n) ** 2, axis=-1))
    n = n1 if scenario.transport == REFLECT else n2
    scale = 1.0 if scenario.transport == REFLECT else n1 / n2
    A = sphere.matrix_A(x, y, scale)
    B = sphere.matrix_B(x, y)
    M = A - (H / n) @ B
    T = scenario.t_map(x, y, g)
    return np.abs(np.linalg.det(M)) / (np.abs(T[..., 2]) * sphere.cross_norm_su_sv(x, y))


def unified_pde_lhs(scenario: Scenario, x, y, grad_phi, hess_phi):
    """``d_factor |det D^2 phi| / sqrt(1 - |grad phi|^2)``.

    ``d_factor`` is 1 for collimated sources and ``(x^2+y^2+1)^{3/2}`` for the
    point source at the origin.
    """
    g = np.asarray(grad_phi, dtype=float)
    dfac = scenario.d_q(x, y) ** 3
    return dfac * np.abs(np.linalg.det(hess_phi)) / np.sqrt(1.0 - np.sum(g * g, axis=-1))


def unified_direction(scenario: Scenario, grad_phi):
    g = np.asarray(grad_phi, dtype=float)
    t3 = scenario.sigma * np.sqrt(1.0 - np.sum(g * g, axis=-1))
    return np.concatenate([g, t3[..., None]], axis=-1)


# --------------------------------------------------------------------------
# the reduced problem


@dataclass
class MAProblem:
    """``det D^2 phi = f1 / f2(grad phi)`` on D1 with ``grad phi(D1) = D2``.

    ``weights1`` and ``weights2`` are the discrete source and target masses
    (per dual cell of ``grid1`` / ``grid2``); both sum to ``total_mass``.
    """

    grid1: Grid
    domain1: Disk | Rect
    f1_func: Callable
    f1: np.ndarray
    mask1: np.ndarray
    weights1: np.ndarray
    grid2: Grid
    domain2: Annulus
    f2_func: Callable
    weights2: np.ndarray
    total_mass: float
    mass_scale: float = 1.0
    scenario: Scenario | None = None
    notes: list = field(default_factory=list)

    @property
    def h(self) -> float:
        return self.grid1.hx

    @property
    def h2(self) -> float:
        return self.grid2.hx

    def f2(self, p1, p2):
        return self.f2_func(p1, p2)

    @classmethod
    def build(
        cls,
        domain1,
        f1_func,
        domain2: Annulus,
        f2_func,
        resolution: int,
        target_resolution: int | None = None,
        mass1: float | None = None,
        mass2: float | None = None,
        scenario: Scenario | None = None,
        mass_rtol: float = MASS_RTOL,
        normalize: bool = False,
    ) -> "MAProblem":
        """Discretize densities ``f1`` on ``domain1`` and ``f2`` on ``domain2``."""
        notes = []
        if mass1 is None:
            mass1 = integrate(domain1, f1_func, 200)
        if mass2 is None:
            mass2 = integrate(domain2, f2_func, 200)
        if not mass1 > 0:
            raise ValueError("source density has no mass")
        rel = abs(mass1 - mass2) / mass1
        scale = 1.0
        if rel > mass_rtol:
            if not normalize:
                raise MassImbalance(mass1, mass2, rel)
            scale = mass1 / mass2
            notes.append(f"target intensity scaled by {scale:.12g} to balance masses")
            base_f2 = f2_func
            f2_func = lambda p1, p2: scale * base_f2(p1, p2)  # noqa: E731
        for name, dom in (("source domain", domain1), ("target projection", domain2)):
            if not getattr(dom, "convex", True):
                msg = f"{name} is not convex; existence theory does not cover it"
                warnings.warn(msg, stacklevel=2)
                notes.append(msg)

        grid1 = Grid.covering(domain1.bbox, resolution)
        X, Y = grid1.mesh()
        mask1 = domain1.contains(X, Y)
        f1 = np.where(mask1, f1_func(X, Y), 0.0)
        w1 = cell_integrals(domain1, grid1, f1_func)
        grid2 = Grid.covering(domain2.bbox, target_resolution or resolution)
        w2 = cell_integrals(domain2, grid2, f2_func)
        w1 *= mass1 / w1.sum()
        w2 *= mass1 / w2.sum()
        return cls(
            grid1=grid1, domain1=domain1, f1_func=f1_func, f1=f1, mask1=mask1, weights1=w1,
            grid2=grid2, domain2=domain2, f2_func=f2_func, weights2=w2,
            total_mass=float(mass1), mass_scale=scale, scenario=scenario, notes=notes,
        )


def reduce_to_ma(
    scenario: Scenario,
    grid_resolution: int,
    target_resolution: int | None = None,
    normalize: bool = False,
) -> MAProblem:
    """Source density on the footprint and projected target density for ``scenario``.

    Raises :class:`MassImbalance` when the source and target powers differ by
    more than 1e-6 relative, unless ``normalize`` is set, in which case the
    target intensity is rescaled and the factor recorded in ``notes``.
    """
    tgt = scenario.target
    if tgt.rho_max >= 1.0:
        raise DomainTouchesEquator("projected target reaches the unit circle")
    return MAProblem.build(
        scenario.source.domain,
        scenario.source.density,
        tgt.projected,
        tgt.f2,
        grid_resolution,
        target_resolution,
        mass1=scenario.source.power(),
        mass2=tgt.power(),
        scenario=scenario,
        normalize=normalize,
    )


def phase_from_potential(phi: GridField, scenario: Scenario) -> GridField:
    """``psi = n1 d_Q - n2 phi`` on the potential's grid, pinned to 0 at the grid center."""
    X, Y = phi.grid.mesh()
    psi = scenario.media.n1 * scenario.d_q(X, Y) - scenario.media.n2 * phi.values
    return GridField(phi.grid, psi, "psi", phi.mask).normalized()


def potential_from_phase(psi: GridField, scenario: Scenario) -> GridField:
    X, Y = psi.grid.mesh()
    phi = (scenario.media.n1 * scenario.d_q(X, Y) - psi.values) / scenario.media.n2
    return GridField(psi.grid, phi, "phi", psi.mask)
