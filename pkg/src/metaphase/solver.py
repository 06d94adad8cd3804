"""Monge-Ampere second boundary value solver and its finite-difference certifier.

The potential is obtained in two stages:

1. Entropic optimal transport between the discretized source and target
   measures (quadratic cost, log-domain Sinkhorn with epsilon scaling on
   tensor grids).  The Brenier potential is ``phi = |x|^2/2 - f`` with ``f``
   the source-side dual potential, evaluated by a soft c-transform so it is
   smooth, convex and defined at every grid node.
2. A damped Gauss-Newton polish of the finite-difference equation
   ``det D^2_h phi * f2(grad_h phi) = f1`` on the source nodes, with the second
   boundary condition imposed as ``grad_h phi(b) in boundary(D2)`` at sample
   points ``b`` on the boundary of D1.  This removes the entropic blur, which
   otherwise pulls the gradient map inward by about ``sqrt(eps)`` near the
   edge of the target.

The polish runs when D2 is a disk, D1 is a full disk or a rectangle and f1 is
positive on D1; otherwise the entropic potential is returned as is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .domains import Disk, Rect
from .errors import DegenerateDensity, GradientOutOfRange, NoConvergence
from .grid import Grid, GridField
from .scenarios import MAProblem


@dataclass
class SolverParams:
    """Knobs for :func:`solve`.

    ``epsilon_schedule`` is absolute (units of squared length).  When it is
    ``None`` the schedule runs geometrically with ratio 1/2 from
    ``eps_start * diam(D2)^2`` down to ``eps_final * diam(D2)^2``.
    """

    epsilon_schedule: list | None = None
    eps_start: float = 0.1
    eps_final: float = 1e-3
    max_iterations: int = 5000
    marginal_tolerance: float = 1e-4
    polish: bool = True
    polish_iterations: int = 40
    polish_tolerance: float = 1e-6
    residual_floor: float = 1e-9

    def __post_init__(self):
        if not 0 < self.marginal_tolerance < 1:
            raise ValueError("marginal_tolerance must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.epsilon_schedule is not None:
            eps = np.asarray(self.epsilon_schedule, dtype=float)
            if eps.ndim != 1 or eps.size == 0 or not eps[-1] > 0 or np.any(np.diff(eps) >= 0):
                raise ValueError("epsilon_schedule must be strictly decreasing with a positive final value")
        elif not 0 < self.eps_final <= self.eps_start:
            raise ValueError("need 0 < eps_final <= eps_start")

    def schedule(self, diameter: float) -> list:
        if self.epsilon_schedule is not None:
            return [float(e) for e in self.epsilon_schedule]
        d2 = diameter**2
        out, e = [], self.eps_start * d2
        stop = self.eps_final * d2
        while e > stop * (1 + 1e-9):
            out.append(e)
            e *= 0.5
        out.append(stop)
        return out


@dataclass
class ResidualReport:
    field: np.ndarray
    interior: np.ndarray
    median: float
    p95: float
    max: float

    def stats(self) -> dict:
        return {"median": self.median, "p95": self.p95, "max": self.max}


@dataclass
class SolverResult:
    phi: GridField
    gradient_map: np.ndarray
    residual: ResidualReport
    iterations_used: int
    marginal_error: float
    converged: bool
    polished: bool = False
    gradient_excess: float = 0.0
    unsupported: np.ndarray | None = None
    notes: list = field(default_factory=list)

    @property
    def residual_stats(self) -> dict:
        return self.residual.stats()


# --------------------------------------------------------------------------
# entropic stage


def _lse(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(m, axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def _soft_ctransform(G, Cx, Cy, eps):
    """``F[i, j] = eps * LSE_{k,l}(G[k, l] - (Cx[i, k] + Cy[j, l]) / eps)`` done one axis at a time."""
    H = _lse(G[:, None, :] - Cy[None, :, :] / eps, axis=2)
    return eps * _lse(H[None, :, :] - Cx[:, :, None] / eps, axis=1)


def _log_weights(w):
    with np.errstate(divide="ignore"):
        return np.log(w / w.sum())


def entropic_potentials(problem: MAProblem, params: SolverParams, f_init=None):
    """Sinkhorn dual potentials ``(f, g)`` with ``f`` the soft c-transform of ``g``.

    Returns ``f`` on ``grid1``, ``g`` on ``grid2``, total iterations and the
    final target-marginal L1 error.
    """
    g1, g2 = problem.grid1, problem.grid2
    la, lb = _log_weights(problem.weights1), _log_weights(problem.weights2)
    b = np.exp(lb)
    cxx = 0.5 * (g1.x[:, None] - g2.x[None, :]) ** 2
    cyy = 0.5 * (g1.y[:, None] - g2.y[None, :]) ** 2
    f = np.zeros(g1.shape) if f_init is None else np.asarray(f_init, dtype=float).copy()
    g = None
    total = 0
    err = np.inf
    for eps in params.schedule(problem.domain2.diameter):
        if g is None:
            g = -_soft_ctransform(f / eps + la, cxx.T, cyy.T, eps)
        for _ in range(params.max_iterations):
            f = -_soft_ctransform(g / eps + lb, cxx, cyy, eps)
            g_new = -_soft_ctransform(f / eps + la, cxx.T, cyy.T, eps)
            err = float(np.sum(b * np.abs(np.expm1((g - g_new) / eps))))
            g = g_new
            total += 1
            if err < params.marginal_tolerance:
                break
        else:
            raise NoConvergence(
                f"Sinkhorn did not reach marginal error {params.marginal_tolerance:g} "
                f"at eps={eps:.3e} within {params.max_iterations} iterations (error {err:.3e})"
            )
    f = -_soft_ctransform(g / eps + lb, cxx, cyy, eps)
    return f, g, total, err


# --------------------------------------------------------------------------
# finite-difference operators


def _index(grid: Grid):
    return np.arange(grid.nx * grid.ny).reshape(grid.shape)


def _stencil_matrix(grid: Grid, rows, taps):
    """Sparse matrix applying ``sum c * v[i+di, j+dj]`` at node ``rows`` (bool mask)."""
    idx = _index(grid)
    ii, jj = np.nonzero(rows)
    r, c, v = [], [], []
    for k, ((di, dj), coef) in enumerate(taps):
        r.append(np.arange(ii.size))
        c.append(idx[ii + di, jj + dj])
        v.append(np.full(ii.size, coef))
    return sp.csr_matrix(
        (np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
        shape=(ii.size, grid.nx * grid.ny),
    )


def hessian_operators(grid: Grid, rows):
    h2 = grid.hx * grid.hy
    dxx = _stencil_matrix(grid, rows, [((1, 0), 1 / grid.hx**2), ((0, 0), -2 / grid.hx**2), ((-1, 0), 1 / grid.hx**2)])
    dyy = _stencil_matrix(grid, rows, [((0, 1), 1 / grid.hy**2), ((0, 0), -2 / grid.hy**2), ((0, -1), 1 / grid.hy**2)])
    dxy = _stencil_matrix(
        grid, rows,
        [((1, 1), 0.25 / h2), ((1, -1), -0.25 / h2), ((-1, 1), -0.25 / h2), ((-1, -1), 0.25 / h2)],
    )
    return dxx, dyy, dxy


def gradient_operators(grid: Grid, rows):
    gx = _stencil_matrix(grid, rows, [((1, 0), 0.5 / grid.hx), ((-1, 0), -0.5 / grid.hx)])
    gy = _stencil_matrix(grid, rows, [((0, 1), 0.5 / grid.hy), ((0, -1), -0.5 / grid.hy)])
    return gx, gy


def bilinear_operator(grid: Grid, x, y):
    """Sparse ``(n_points, n_nodes)`` matrix of bilinear interpolation weights."""
    i, j, a, b = grid.locate(x, y)
    idx = _index(grid)
    n = np.size(x)
    rows = np.repeat(np.arange(n), 4)
    cols = np.stack([idx[i, j], idx[i + 1, j], idx[i, j + 1], idx[i + 1, j + 1]], 1).ravel()
    vals = np.stack([(1 - a) * (1 - b), a * (1 - b), (1 - a) * b, a * b], 1).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, grid.nx * grid.ny))


def interior_nodes(mask):
    """Nodes of ``mask`` whose full 3x3 stencil lies in ``mask``."""
    return ndimage.binary_erosion(mask, structure=np.ones((3, 3), bool), border_value=0)


# --------------------------------------------------------------------------
# certification


def ma_residual(phi: GridField, problem: MAProblem, floor: float = 1e-9) -> ResidualReport:
    """Relative residual ``|det D^2_h phi * f2(grad_h phi) - f1| / max(f1, floor * max f1)``.

    The field is filled on source nodes whose 3x3 stencil exists; statistics
    are taken over nodes whose 3x3 stencil lies inside the source domain.

    Raises
    ------
    GradientOutOfRange
        If a discrete gradient on the source domain lies more than one target
        grid cell outside the convex hull of D2 (``f2`` is clamped into D2).
    """
    grid = phi.grid
    if not grid.compatible(problem.grid1):
        raise ValueError("potential grid does not match the problem grid")
    pxx, pyy, pxy = grid.hessian(phi.values)
    gx, gy = grid.gradient(phi.values)
    mask = problem.mask1
    out = problem.domain2.distance_outside_hull(gx[mask], gy[mask])
    if out.size and out.max() > problem.h2:
        raise GradientOutOfRange(
            f"discrete gradient leaves the target domain by {out.max():.3e} (> one cell, {problem.h2:.3e})"
        )
    valid = mask & np.isfinite(pxx)
    det = pxx * pyy - pxy**2
    R = np.full(grid.shape, np.nan)
    f1 = problem.f1
    den = np.maximum(f1, floor * f1[mask].max())
    R[valid] = np.abs(det[valid] * problem.f2(gx[valid], gy[valid]) - f1[valid]) / den[valid]
    inner = interior_nodes(mask)
    vals = R[inner & valid]
    if vals.size == 0:
        vals = R[valid]
    return ResidualReport(
        field=R,
        interior=inner,
        median=float(np.median(vals)),
        p95=float(np.percentile(vals, 95)),
        max=float(np.max(vals)),
    )


def convexity_check(phi: GridField, mask=None, tol: float = 1e-8) -> dict:
    """Minimum eigenvalue of the centered Hessian at interior nodes."""
    pxx, pyy, pxy = phi.grid.hessian(phi.values)
    valid = np.isfinite(pxx)
    if mask is not None:
        valid &= mask
    tr = 0.5 * (pxx + pyy)
    lam = tr - np.sqrt((0.5 * (pxx - pyy)) ** 2 + pxy**2)
    lam = np.where(valid, lam, np.nan)
    v = lam[valid]
    return {
        "min_eigenvalue": float(v.min()),
        "fraction_nonconvex": float(np.mean(v < -tol)),
        "eigenvalues": lam,
    }


# --------------------------------------------------------------------------
# Newton polish


def _boundary_samples(domain, h):
    if isinstance(domain, Disk):
        if not domain.full:
            return None
        n = int(math.ceil(2 * 2 * math.pi * domain.radius / h))
    elif isinstance(domain, Rect):
        n = int(math.ceil(2 * 2 * ((domain.xmax - domain.xmin) + (domain.ymax - domain.ymin)) / h))
    else:
        return None
    return domain.boundary_points(n)


def _f2_and_grad(f2, p1, p2, step=1e-7):
    v = f2(p1, p2)
    d1 = (f2(p1 + step, p2) - f2(p1 - step, p2)) / (2 * step)
    d2 = (f2(p1, p2 + step) - f2(p1, p2 - step)) / (2 * step)
    return v, d1, d2


class _Polisher:
    """Damped Gauss-Newton on the finite-difference MA equation."""

    def __init__(self, problem: MAProblem, bx, by, reg: float = 0.1):
        grid = problem.grid1
        self.problem = problem
        self.grid = grid
        mask = problem.mask1
        self.mask = mask
        h = grid.hx
        self.dxx, self.dyy, self.dxy = hessian_operators(grid, mask)
        self.f1 = problem.f1[mask]

        # gradient rows needed at the corners of cells holding boundary samples
        i, j, _, _ = grid.locate(bx, by)
        need = np.zeros(grid.shape, bool)
        for di in (0, 1):
            for dj in (0, 1):
                need[i + di, j + dj] = True
        need |= mask
        gx, gy = gradient_operators(grid, need)
        interp = bilinear_operator(grid, bx, by)
        rows_of = -np.ones(grid.nx * grid.ny, int)
        rows_of[_index(grid)[need]] = np.arange(int(need.sum()))
        # interpolation onto gradient-row space
        cols = interp.indices
        interp = sp.csr_matrix((interp.data, rows_of[cols], interp.indptr), shape=(interp.shape[0], int(need.sum())))
        self.bgx = (interp @ gx).tocsr()
        self.bgy = (interp @ gy).tocsr()
        self.ngx, self.ngy = gradient_operators(grid, mask)

        used = np.zeros(grid.nx * grid.ny, bool)
        for m in (self.dxx, self.dyy, self.dxy, self.bgx, self.bgy):
            used[m.indices] = True
        self.unknowns = np.nonzero(used)[0]
        used2d = used.reshape(grid.shape)
        halo = used2d & ~mask

        # third differences along lines of unknowns that touch the halo
        regs = []
        for axis in (0, 1):
            step = np.array([1, 0]) if axis == 0 else np.array([0, 1])
            ok = np.zeros(grid.shape, bool)
            touch = np.zeros(grid.shape, bool)
            sl = [slice(None), slice(None)]
            sl[axis] = slice(1, -2)
            ok[tuple(sl)] = True
            base = np.argwhere(ok)
            keep = np.ones(len(base), bool)
            anyhalo = np.zeros(len(base), bool)
            for k in (-1, 0, 1, 2):
                pts = base + k * step
                keep &= used2d[pts[:, 0], pts[:, 1]]
                anyhalo |= halo[pts[:, 0], pts[:, 1]]
            base = base[keep & anyhalo]
            idx = _index(grid)
            coefs = (-1.0, 3.0, -3.0, 1.0)
            r = np.repeat(np.arange(len(base)), 4)
            c = np.stack([idx[base[:, 0] + k * step[0], base[:, 1] + k * step[1]] for k in (-1, 0, 1, 2)], 1).ravel()
            v = np.tile(coefs, len(base))
            regs.append(sp.csr_matrix((v, (r, c)), shape=(len(base), grid.nx * grid.ny)))
            del touch
        self.reg_op = sp.vstack(regs).tocsr()

        scale = math.sqrt(np.median(self.f1 / problem.f2(0 * self.f1 + problem.domain2.cx, 0 * self.f1 + problem.domain2.cy)))
        self.curv = scale
        self.w_bc = 1.0 / (h * scale)
        self.w_reg = reg / (h * h * scale)
        ci, cj = grid.center_index()
        self.gauge = _index(grid)[ci, cj]
        self.w_gauge = 1.0 / (h * h * scale)
        self.center = np.array(problem.domain2.center)
        self.rho = problem.domain2.r_out

    def residual(self, phi, phi_ref_gauge, jac=False):
        v = phi.ravel()
        pxx, pyy, pxy = self.dxx @ v, self.dyy @ v, self.dxy @ v
        p1, p2 = self.ngx @ v, self.ngy @ v
        f2, d1, d2 = _f2_and_grad(self.problem.f2, p1, p2)
        det = pxx * pyy - pxy**2
        r_ma = (det * f2 - self.f1) / self.f1
        q1 = self.bgx @ v - self.center[0]
        q2 = self.bgy @ v - self.center[1]
        qn = np.hypot(q1, q2)
        r_bc = self.w_bc * (qn - self.rho)
        r_reg = self.w_reg * (self.reg_op @ v)
        r_g = np.array([self.w_gauge * (v[self.gauge] - phi_ref_gauge)])
        r = np.concatenate([r_ma, r_bc, r_reg, r_g])
        if not jac:
            return r, det, pxx
        inv = 1.0 / self.f1
        D = sp.diags
        J_ma = D(inv * f2 * pyy) @ self.dxx + D(inv * f2 * pxx) @ self.dyy - D(inv * f2 * 2 * pxy) @ self.dxy
        J_ma = J_ma + D(inv * det * d1) @ self.ngx + D(inv * det * d2) @ self.ngy
        qn_safe = np.maximum(qn, 1e-300)
        J_bc = D(self.w_bc * q1 / qn_safe) @ self.bgx + D(self.w_bc * q2 / qn_safe) @ self.bgy
        J_reg = self.w_reg * self.reg_op
        J_g = sp.csr_matrix(([self.w_gauge], ([0], [self.gauge])), shape=(1, v.size))
        J = sp.vstack([J_ma, J_bc, J_reg, J_g]).tocsc()[:, self.unknowns]
        return r, det, pxx, J

    def run(self, phi0, iterations, tol):
        phi = phi0.copy()
        gref = phi.ravel()[self.gauge]
        r, det, pxx, J = self.residual(phi, gref, jac=True)
        cost = float(r @ r)
        cost0 = cost
        lam = 1e-6
        it = 0
        for it in range(1, iterations + 1):
            JtJ = (J.T @ J).tocsc()
            g = J.T @ r
            diag = JtJ.diagonal()
            improved = False
            for _ in range(12):
                A = JtJ + sp.diags(lam * np.maximum(diag, 1e-12 * diag.max()))
                try:
                    step = spla.spsolve(A, -g)
                except RuntimeError:
                    lam *= 10
                    continue
                trial = phi.ravel().copy()
                trial[self.unknowns] += step
                trial = trial.reshape(phi.shape)
                rt, dett, pxxt = self.residual(trial, gref)
                ct = float(rt @ rt)
                if np.isfinite(ct) and ct < cost and np.all(dett > 0) and np.all(pxxt > 0):
                    phi, improved = trial, True
                    lam = max(lam / 3, 1e-12)
                    break
                lam *= 4
            if not improved:
                break
            rel = (cost - ct) / max(cost, 1e-300)
            r, det, pxx, J = self.residual(phi, gref, jac=True)
            cost = float(r @ r)
            if rel < tol or cost < 1e-24 * max(cost0, 1.0):
                break
        return phi, {"iterations": it, "cost0": cost0, "cost": cost}


def _polish_applicable(problem: MAProblem):
    d2 = problem.domain2
    if d2.r_in != 0:
        return None, "target projection is not a disk; Newton polish skipped"
    if not np.all(problem.f1[problem.mask1] > 0):
        return None, "source density vanishes on part of D1; Newton polish skipped"
    pts = _boundary_samples(problem.domain1, problem.h)
    if pts is None:
        return None, "source domain shape not supported by the Newton polish"
    return pts, ""


# --------------------------------------------------------------------------
# driver


def solve(problem: MAProblem, params: SolverParams | None = None, init=None) -> SolverResult:
    """Convex potential ``phi`` with ``grad phi`` pushing ``f1`` forward to ``f2``.

    Parameters
    ----------
    problem : MAProblem
    params : SolverParams, optional
    init : array_like, optional
        Initial potential on ``problem.grid1``; its Legendre-type dual
        ``|x|^2/2 - init`` seeds the Sinkhorn iteration.

    Raises
    ------
    DegenerateDensity
        If ``f1`` vanishes on more than half of the source nodes.
    NoConvergence
        If a Sinkhorn stage exhausts ``max_iterations``.
    """
    params = params or SolverParams()
    mask = problem.mask1
    if not mask.any():
        raise DegenerateDensity("source domain contains no grid nodes")
    zero = problem.f1[mask] <= 0
    if zero.mean() > 0.5:
        raise DegenerateDensity(f"f1 vanishes on {100 * zero.mean():.1f}% of the source domain")
    if not np.all(problem.weights2 >= 0) or problem.weights2.sum() <= 0:
        raise DegenerateDensity("target density has no positive mass")

    grid = problem.grid1
    X, Y = grid.mesh()
    quad = 0.5 * (X**2 + Y**2)
    f_init = None if init is None else quad - np.asarray(init, dtype=float)
    f, _, iters, err = entropic_potentials(problem, params, f_init)
    phi = quad - f
    notes = list(problem.notes)

    polished = False
    if params.polish:
        pts, why = _polish_applicable(problem)
        if pts is None:
            notes.append(why)
        else:
            pol = _Polisher(problem, *pts)
            new, info = pol.run(phi, params.polish_iterations, params.polish_tolerance)
            if info["cost"] < info["cost0"]:
                phi = new
                polished = True
                iters += info["iterations"]
                notes.append(
                    f"Newton polish: {info['iterations']} steps, "
                    f"squared residual {info['cost0']:.3e} -> {info['cost']:.3e}"
                )
            else:
                notes.append("Newton polish made no progress; entropic potential kept")

    field_ = GridField(grid, phi, "phi", mask)
    gx, gy = grid.gradient(phi)
    excess = float(problem.domain2.distance_outside_hull(gx[mask], gy[mask]).max())
    if problem.domain2.r_in > 0:
        gap = problem.domain2.distance_outside(gx[mask], gy[mask]) > problem.h2
        notes.append(
            f"{100 * gap.mean():.2f}% of source nodes map into the hole of the target ring "
            "(the transport map is discontinuous there)"
        )
    residual = ma_residual(field_, problem, params.residual_floor)
    unsupported = mask & (problem.f1 <= 0)
    if unsupported.any():
        notes.append(f"{int(unsupported.sum())} source nodes carry no mass; gradient there comes from the c-transform")
    converged = err <= params.marginal_tolerance and excess <= problem.h2
    return SolverResult(
        phi=field_,
        gradient_map=np.stack([gx, gy], axis=-1),
        residual=residual,
        iterations_used=iters,
        marginal_error=err,
        converged=converged,
        polished=polished,
        gradient_excess=excess,
        unsupported=unsupported,
        notes=notes,
    )
