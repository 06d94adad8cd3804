"""Independent verification by ray tracing through a sampled phase.

Rays are drawn proportionally to the source power, bent by the scenario's
outgoing-direction map using the phase gradient (centered differences,
bilinearly interpolated), and binned on the target cap.  Nothing here looks
at the transport solver's internals.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import sphere
from .domains import Disk, Rect, integrate
from .grid import GridField
from .scenarios import COLLIMATED, REFLECT, Scenario, TargetSpec

BLOCK_SIZE = 1 << 16
THREADS_ENV = "METAPHASE_THREADS"


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {n}")
    return n


# --------------------------------------------------------------------------
# sampling


class SourceSampler:
    """Draws strike points on the plane with density proportional to ``f1``.

    Radially symmetric sources use inverse-CDF sampling of a tabulated radial
    distribution; everything else uses rejection sampling against a uniform
    proposal on the domain.
    """

    def __init__(self, domain, density: Callable, radial_center=None, radial_profile=None):
        self.domain = domain
        self.density = density
        self._radial = None
        if radial_center is not None and isinstance(domain, Disk) and domain.full:
            self._radial = self._radial_table(domain, radial_profile or density)
        else:
            x, y, _ = domain.quadrature(80)
            self._bound = 1.1 * float(np.max(density(x, y)))

    @staticmethod
    def _radial_table(domain, density, n=4096):
        r = np.linspace(0.0, domain.radius, n + 1)
        pdf = density(domain.cx + r, domain.cy + 0 * r) * r
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(r))])
        return r, cdf / cdf[-1]

    def __call__(self, rng: np.random.Generator, n: int):
        d = self.domain
        if self._radial is not None:
            r_tab, cdf = self._radial
            rr = np.interp(rng.random(n), cdf, r_tab)
            t = 2 * math.pi * rng.random(n)
            return d.cx + rr * np.cos(t), d.cy + rr * np.sin(t)
        xs, ys = [], []
        got = 0
        while got < n:
            m = max(2 * (n - got), 1024)
            x, y = d.sample(rng, m)
            f = self.density(x, y)
            if np.any(f > self._bound):
                self._bound = 1.1 * float(np.max(f))
            keep = rng.random(m) * self._bound < f
            xs.append(x[keep])
            ys.append(y[keep])
            got += int(keep.sum())
        return np.concatenate(xs)[:n], np.concatenate(ys)[:n]


def sampler_for(scenario: Scenario) -> SourceSampler:
    src = scenario.source
    if src.is_radial:
        return SourceSampler(src.domain, src.density, radial_center=src.radial_center)
    return SourceSampler(src.domain, src.density)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


# --------------------------------------------------------------------------
# tracing


@dataclass
class RayBatch:
    """Traced rays: strike points, outgoing directions (NaN if evanescent), weights."""

    points: np.ndarray
    directions: np.ndarray
    weights: np.ndarray
    evanescent: np.ndarray
    total_power: float

    @property
    def count(self) -> int:
        return int(self.weights.size)

    @property
    def evanescent_fraction(self) -> float:
        return float(self.evanescent.mean()) if self.count else 0.0

    @property
    def evanescent_power(self) -> float:
        return float(self.weights[self.evanescent].sum())

    def concatenate(self, other: "RayBatch") -> "RayBatch":
        return RayBatch(
            np.concatenate([self.points, other.points]),
            np.concatenate([self.directions, other.directions]),
            np.concatenate([self.weights, other.weights]),
            np.concatenate([self.evanescent, other.evanescent]),
            self.total_power + other.total_power,
        )


def outgoing(scenario: Scenario, psi: GridField, x, y):
    """Outgoing directions at strike points ``(x, y)``; NaN rows are evanescent."""
    g = psi.gradient_at(x, y)
    return scenario.t_map(x, y, g, errors="nan")


def trace(
    scenario: Scenario,
    psi: GridField,
    n_rays: int,
    seed: int = 0,
    block_size: int = BLOCK_SIZE,
    threads: int | None = None,
    total_power: float | None = None,
) -> RayBatch:
    """Trace ``n_rays`` rays sampled proportionally to the source power.

    Every ray carries the same weight ``total_power / n_rays``.  Rays are
    generated in fixed blocks, each with its own random stream derived from
    ``(seed, block index)``, so the result does not depend on ``threads``.

    Raises
    ------
    FootprintExceeded
        If a strike point lies outside the phase grid.
    """
    if n_rays < 1:
        raise ValueError("n_rays must be >= 1")
    if total_power is None:
        total_power = scenario.source.power()
    sampler = sampler_for(scenario)
    gx, gy = psi.gradient()
    grad = np.stack([gx, gy], axis=-1)
    nblocks = -(-n_rays // block_size)

    def run(b):
        n = min(block_size, n_rays - b * block_size)
        x, y = sampler(_block_rng(seed, b), n)
        g = psi.grid.interpolate(grad, x, y)
        return np.stack([x, y], -1), scenario.t_map(x, y, g, errors="nan")

    threads = threads or default_threads()
    if threads > 1 and nblocks > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, range(nblocks)))
    else:
        parts = [run(b) for b in range(nblocks)]
    pts = np.concatenate([p[0] for p in parts])
    dirs = np.concatenate([p[1] for p in parts])
    ev = np.isnan(dirs[:, 0])
    w = np.full(n_rays, total_power / n_rays)
    return RayBatch(pts, dirs, w, ev, float(total_power))


# --------------------------------------------------------------------------
# histogram


@dataclass
class SphericalHistogram:
    """Power binned on a cap ``theta_min <= theta <= theta_max`` about ``axis * e3``.

    Bins are uniform in azimuth ``u`` and equal-area in ``cos(theta)``, so
    every bin has the same solid angle.  Rays outside the cap are clamped to
    the nearest ring and their power is also reported as ``outside_power``.
    """

    power: np.ndarray
    counts: np.ndarray
    axis: int
    theta_min: float
    theta_max: float
    outside_power: float = 0.0
    evanescent_power: float = 0.0
    traced_power: float = 0.0

    @property
    def shape(self):
        return self.power.shape

    @property
    def n_u(self) -> int:
        return self.power.shape[0]

    @property
    def n_v(self) -> int:
        return self.power.shape[1]

    @property
    def bin_solid_angle(self) -> float:
        cap = 2 * math.pi * (math.cos(self.theta_min) - math.cos(self.theta_max))
        return cap / (self.n_u * self.n_v)

    @property
    def solid_angle(self) -> np.ndarray:
        return np.full(self.shape, self.bin_solid_angle)

    @property
    def density(self) -> np.ndarray:
        return self.power / self.bin_solid_angle

    @property
    def binned_power(self) -> float:
        return float(self.power.sum())

    def _cos_edges(self):
        return np.linspace(math.cos(self.theta_min), math.cos(self.theta_max), self.n_v + 1)

    @property
    def u_centers(self) -> np.ndarray:
        return 2 * math.pi * (np.arange(self.n_u) + 0.5) / self.n_u

    @property
    def theta_centers(self) -> np.ndarray:
        """Polar angle about the cap axis at the equal-area midpoint of each ring."""
        c = self._cos_edges()
        return np.arccos(0.5 * (c[1:] + c[:-1]))

    @property
    def v_centers(self) -> np.ndarray:
        """Standard polar angle from +e3 of each ring's center."""
        th = self.theta_centers
        return th if self.axis > 0 else math.pi - th

    def centers(self) -> np.ndarray:
        """Unit direction at the center of every bin, shape ``(n_u, n_v, 3)``."""
        U, V = np.meshgrid(self.u_centers, self.v_centers, indexing="ij")
        return sphere.s(U, V)

    def __add__(self, other: "SphericalHistogram") -> "SphericalHistogram":
        if (self.shape, self.axis, self.theta_min, self.theta_max) != (
            other.shape, other.axis, other.theta_min, other.theta_max,
        ):
            raise ValueError("histograms have different binnings")
        return SphericalHistogram(
            self.power + other.power,
            self.counts + other.counts,
            self.axis,
            self.theta_min,
            self.theta_max,
            self.outside_power + other.outside_power,
            self.evanescent_power + other.evanescent_power,
            self.traced_power + other.traced_power,
        )


def sphere_histogram(
    batch: RayBatch,
    n_u: int = 24,
    n_v: int = 24,
    target: TargetSpec | None = None,
    axis: int | None = None,
) -> SphericalHistogram:
    """Bin outgoing directions on the target cap (or a whole hemisphere).

    With ``target`` the bins cover its cap; otherwise they cover the
    hemisphere about ``axis * e3`` (``axis`` defaults to the side holding
    most of the power).  Evanescent rays are not binned but their power is
    kept, so ``binned + evanescent == traced`` holds exactly in ray counts.
    """
    if batch.count == 0:
        raise ValueError("cannot histogram an empty ray batch")
    ok = ~batch.evanescent
    d = batch.directions[ok]
    w = batch.weights[ok]
    if target is not None:
        axis, t0, t1 = target.axis, target.theta_min, target.theta_max
    else:
        if axis is None:
            axis = 1 if np.sum(w * d[:, 2]) >= 0 else -1
        t0, t1 = 0.0, 0.5 * math.pi
    c = np.clip(axis * d[:, 2], -1.0, 1.0)
    th = np.arccos(c)
    outside = (th < t0) | (th > t1)
    c0, c1 = math.cos(t0), math.cos(t1)
    jv = np.clip(np.floor((c0 - c) / (c0 - c1) * n_v).astype(int), 0, n_v - 1)
    u = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * math.pi)
    ju = np.clip(np.floor(u / (2 * math.pi) * n_u).astype(int), 0, n_u - 1)
    flat = ju * n_v + jv
    counts = np.bincount(flat, minlength=n_u * n_v).reshape(n_u, n_v)
    power = np.bincount(flat, weights=w, minlength=n_u * n_v).reshape(n_u, n_v)
    uniform = w.size and np.all(w == w[0])
    if uniform:
        # exact bookkeeping for equal-weight rays
        power = counts * float(w[0])
    return SphericalHistogram(
        power=power,
        counts=counts,
        axis=axis,
        theta_min=t0,
        theta_max=t1,
        outside_power=float(outside.sum() * w[0]) if uniform else float(w[outside].sum()),
        evanescent_power=batch.evanescent_power,
        traced_power=batch.total_power,
    )


def density_distance(est: SphericalHistogram, target: TargetSpec, min_expected: float = 100.0) -> dict:
    """L1 and relative L-infinity distance between binned and target densities.

    The target is rescaled to the histogram's binned power.  ``L1`` is
    ``sum |est - g(center)| dOmega / P``; ``Linf`` is the largest relative
    deviation over bins expecting at least ``min_expected`` rays.
    """
    g = target.g(est.centers(), clamp=True)
    dw = est.bin_solid_angle
    P = est.binned_power
    if P <= 0:
        raise ValueError("histogram holds no power")
    k = P / float(np.sum(g * dw))
    gt = k * g
    l1 = float(np.sum(np.abs(est.density - gt)) * dw / P)
    n_total = int(est.counts.sum())
    expected = gt * dw / P * n_total
    sel = expected >= min_expected
    linf = float(np.max(np.abs(est.density - gt)[sel] / gt[sel])) if sel.any() else float("nan")
    return {"L1": l1, "Linf": linf, "bins_used": int(sel.sum())}


# --------------------------------------------------------------------------
# energy balance


def jacobian_of_trace(scenario: Scenario, psi: GridField, x, y, step: float | None = None):
    """``|T_x x T_y|`` of the traced map by central differences."""
    if step is None:
        step = 1e-6 * psi.grid.hx
    Tpx = outgoing(scenario, psi, x + step, y)
    Tmx = outgoing(scenario, psi, x - step, y)
    Tpy = outgoing(scenario, psi, x, y + step)
    Tmy = outgoing(scenario, psi, x, y - step)
    Tx = (Tpx - Tmx) / (2 * step)
    Ty = (Tpy - Tmy) / (2 * step)
    return np.linalg.norm(np.cross(Tx, Ty), axis=-1)


def _region(scenario: Scenario, region):
    if region is None or isinstance(region, (Disk, Rect)):
        return region
    return scenario.source.domain.region(region)


def energy_balance(
    scenario: Scenario,
    psi: GridField,
    region="full",
    n_rays: int = 200_000,
    seed: int = 0,
) -> dict:
    """Compare the source power on ``region`` with the target power it is sent to.

    ``lhs`` integrates ``f1`` over the region by quadrature.  ``rhs`` estimates
    ``int_{T(E)} g dsigma = int_E g(T) |T_x x T_y| dx`` by Monte Carlo over
    uniform points of the region, using the traced map.  Directions outside the
    cap contribute nothing, so a map that overshoots the cap loses energy.
    """
    E = _region(scenario, region)
    if E is None:
        return {"region": "empty", "lhs": 0.0, "rhs": 0.0, "rel_err": 0.0, "stderr": 0.0}
    lhs = integrate(E, scenario.source.density, 200)
    rng = _block_rng(seed, 0)
    x, y = E.sample(rng, n_rays)
    T = outgoing(scenario, psi, x, y)
    J = jacobian_of_trace(scenario, psi, x, y)
    vals = np.where(np.isnan(T[:, 0]), 0.0, scenario.target.g(np.nan_to_num(T)) * J)
    area = _area(E)
    rhs = float(area * vals.mean())
    stderr = float(area * vals.std() / math.sqrt(n_rays))
    name = region if isinstance(region, str) else "custom"
    rel = abs(rhs - lhs) / abs(lhs) if lhs else abs(rhs)
    return {"region": name, "lhs": float(lhs), "rhs": rhs, "rel_err": float(rel), "stderr": stderr}


def _area(E) -> float:
    return float(E.area)


# --------------------------------------------------------------------------
# Jacobian identities


@dataclass(frozen=True)
class AnalyticPhase:
    """Smooth test phase with closed-form gradient and Hessian."""

    name: str
    value: Callable
    grad: Callable
    hess: Callable


def quadratic_phase(a: float, b: float, c: float = 0.0, gx: float = 0.0, gy: float = 0.0) -> AnalyticPhase:
    """``psi = (a x^2 + b y^2)/2 + c x y + gx x + gy y``."""
    def value(x, y):
        return 0.5 * (a * x * x + b * y * y) + c * x * y + gx * x + gy * y

    def grad(x, y):
        return np.stack([a * x + c * y + gx, b * y + c * x + gy], -1)

    def hess(x, y):
        z = np.zeros(np.broadcast(x, y).shape)
        return np.stack([np.stack([z + a, z + c], -1), np.stack([z + c, z + b], -1)], -2)

    return AnalyticPhase(f"quadratic({a},{b},{c})", value, grad, hess)


def wave_phase(amp: float = 0.05, kx: float = 2.0, ky: float = 1.5) -> AnalyticPhase:
    """``psi = amp * sin(kx x) cos(ky y)``, a non-polynomial test phase."""
    def value(x, y):
        return amp * np.sin(kx * x) * np.cos(ky * y)

    def grad(x, y):
        return np.stack([amp * kx * np.cos(kx * x) * np.cos(ky * y), -amp * ky * np.sin(kx * x) * np.sin(ky * y)], -1)

    def hess(x, y):
        xx = -amp * kx * kx * np.sin(kx * x) * np.cos(ky * y)
        yy = -amp * ky * ky * np.sin(kx * x) * np.cos(ky * y)
        xy = -amp * kx * ky * np.cos(kx * x) * np.sin(ky * y)
        return np.stack([np.stack([xx, xy], -1), np.stack([xy, yy], -1)], -2)

    return AnalyticPhase(f"wave({amp},{kx},{ky})", value, grad, hess)


def closed_form_jacobian(scenario: Scenario, phase: AnalyticPhase, x, y):
    """Closed-form area factor of the outgoing map at plane points ``(x, y)``.

    Collimated: ``|det D^2 psi| / (n^2 |T_3|)`` per unit plane area, with
    ``n = n1`` for reflection and ``n2`` for refraction.  Point source:
    ``|det(k A - D^2 psi B / n)| / |T_3|`` per unit ``(u, v)`` parameter area,
    ``k = n1/n2`` for refraction and 1 for reflection.
    """
    n1, n2 = scenario.media.n1, scenario.media.n2
    n = n1 if scenario.transport == REFLECT else n2
    T = scenario.t_map(x, y, phase.grad(x, y))
    H = phase.hess(x, y)
    if scenario.source.kind == COLLIMATED:
        return np.abs(np.linalg.det(H)) / (n * n * np.abs(T[..., 2]))
    k = 1.0 if scenario.transport == REFLECT else n1 / n2
    M = sphere.matrix_A(x, y, k) - (H / n) @ sphere.matrix_B(x, y)
    return np.abs(np.linalg.det(M)) / np.abs(T[..., 2])


def fd_jacobian(scenario: Scenario, phase: AnalyticPhase, x, y, h: float):
    """Central-difference ``|T_x x T_y|`` (collimated) or ``|T_u x T_v|`` (point source)."""
    def T_plane(px, py):
        return scenario.t_map(px, py, phase.grad(px, py))

    if scenario.source.kind == COLLIMATED:
        Tx = (T_plane(x + h, y) - T_plane(x - h, y)) / (2 * h)
        Ty = (T_plane(x, y + h) - T_plane(x, y - h)) / (2 * h)
        return np.linalg.norm(np.cross(Tx, Ty), axis=-1)
    u, v = sphere.plane_to_uv(x, y)

    def T_uv(uu, vv):
        p = sphere.r(uu, vv)
        return T_plane(p[..., 0], p[..., 1])

    Tu = (T_uv(u + h, v) - T_uv(u - h, v)) / (2 * h)
    Tv = (T_uv(u, v + h) - T_uv(u, v - h)) / (2 * h)
    return np.linalg.norm(np.cross(Tu, Tv), axis=-1)


@dataclass
class ConvergenceReport:
    steps: list
    errors: list
    orders: list
    scale: float

    @property
    def observed_order(self) -> float:
        return float(self.orders[-1]) if self.orders else float("nan")

    @property
    def exact(self) -> bool:
        return max(self.errors) <= 1e-13 * max(self.scale, 1.0)


def jacobian_identity_check(
    scenario: Scenario,
    phase: AnalyticPhase,
    points=None,
    h: float = 0.02,
    levels: int = 3,
) -> ConvergenceReport:
    """Max error of the finite-difference area factor against the closed form at ``h, h/2, h/4, ...``.

    ``points`` default to a ring of plane points with ``0.2 <= r <= 0.6``
    (away from the polar singularity of the point-source parametrization).
    """
    if points is None:
        rr, tt = np.meshgrid(np.linspace(0.2, 0.6, 9), np.linspace(0, 2 * math.pi, 16, endpoint=False))
        points = (rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()
    x, y = map(np.asarray, points)
    exact = closed_form_jacobian(scenario, phase, x, y)
    steps, errors = [], []
    for k in range(levels):
        hk = h / 2**k
        steps.append(hk)
        errors.append(float(np.max(np.abs(fd_jacobian(scenario, phase, x, y, hk) - exact))))
    orders = []
    for e0, e1 in zip(errors[:-1], errors[1:]):
        orders.append(math.log2(e0 / e1) if e0 > 0 and e1 > 0 else float("nan"))
    return ConvergenceReport(steps, errors, orders, float(np.max(np.abs(exact))))


__all__ = [
    "AnalyticPhase",
    "ConvergenceReport",
    "RayBatch",
    "SourceSampler",
    "SphericalHistogram",
    "closed_form_jacobian",
    "density_distance",
    "energy_balance",
    "fd_jacobian",
    "jacobian_identity_check",
    "quadratic_phase",
    "sphere_histogram",
    "trace",
    "wave_phase",
]
