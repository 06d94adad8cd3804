"""Monge-Ampere solver: worked cases, certification and properties."""

import math

import numpy as np
import pytest

from metaphase.domains import Annulus, Disk
from metaphase.errors import DegenerateDensity, GradientOutOfRange, NoConvergence
from metaphase.grid import GridField
from metaphase.scenarios import MAProblem
from metaphase.solver import SolverParams, convexity_check, ma_residual, solve

from conftest import uniform_disk_problem


def _const(c):
    return lambda x, y: np.full(np.shape(x), c)


def _grad_error(res, prob, exact, interior=True):
    """RMS of the discrete gradient error at interior (or all) source nodes."""
    X, Y = prob.grid1.mesh()
    ex, ey = exact(X, Y)
    m = res.residual.interior if interior else prob.mask1
    d = np.hypot(res.gradient_map[..., 0] - ex, res.gradient_map[..., 1] - ey)
    return float(np.sqrt(np.mean(d[m] ** 2)))


# --- parameters -----------------------------------------------------------------


def test_params_validation():
    with pytest.raises(ValueError):
        SolverParams(marginal_tolerance=0.0)
    with pytest.raises(ValueError):
        SolverParams(max_iterations=0)
    with pytest.raises(ValueError):
        SolverParams(epsilon_schedule=[1e-2, 1e-1])
    with pytest.raises(ValueError):
        SolverParams(eps_final=0.5, eps_start=0.1)


def test_schedule_halves_down_to_final():
    s = SolverParams().schedule(2.0)
    assert s[0] == pytest.approx(0.4)
    assert s[-1] == pytest.approx(4e-3)
    r = np.array(s[1:-1]) / np.array(s[:-2])
    np.testing.assert_allclose(r, 0.5)
    assert SolverParams(epsilon_schedule=[0.3, 0.1]).schedule(5.0) == [0.3, 0.1]


# --- worked transports ----------------------------------------------------------


def test_identity_transport():
    # f1 = f2 on the same disk: grad phi = x
    prob = MAProblem.build(Disk(1.0), _const(1 / math.pi), Annulus(0.0, 1.0), _const(1 / math.pi), 40)
    res = solve(prob)
    assert res.converged
    assert _grad_error(res, prob, lambda X, Y: (X, Y)) < 5e-3


def test_translation_transport():
    t = (0.1, -0.05)
    dens = 1 / (math.pi * 0.25)
    prob = MAProblem.build(Disk(0.5), _const(dens), Annulus(0.0, 0.5, *t), _const(dens), 40)
    res = solve(prob)
    assert res.converged
    assert _grad_error(res, prob, lambda X, Y: (X + t[0], Y + t[1])) < 5e-3


def test_uniform_disk_contraction(disk_problem, disk_solution):
    # unit disk to radius 1/2: grad phi = x / 2
    assert disk_solution.converged and disk_solution.polished
    assert _grad_error(disk_solution, disk_problem, lambda X, Y: (X / 2, Y / 2)) < 5e-3
    assert disk_solution.residual.p95 < 0.3
    assert convexity_check(disk_solution.phi, disk_problem.mask1)["fraction_nonconvex"] == 0.0


# --- certification ----------------------------------------------------------------


def test_residual_of_exact_potential(disk_problem):
    # phi = |x|^2/4: det = 1/4, f2 = 4/pi, f1 = 1/pi
    X, Y = disk_problem.grid1.mesh()
    phi = GridField(disk_problem.grid1, 0.25 * (X**2 + Y**2), "phi")
    rep = ma_residual(phi, disk_problem)
    assert rep.max < 1e-12


def test_residual_identity_potential():
    prob = MAProblem.build(Disk(1.0), _const(1 / math.pi), Annulus(0.0, 1.0), _const(1 / math.pi), 32)
    X, Y = prob.grid1.mesh()
    rep = ma_residual(GridField(prob.grid1, 0.5 * (X**2 + Y**2), "phi"), prob)
    assert rep.max < 1e-12 and rep.median < 1e-12


def test_residual_localizes_a_corrupted_node(disk_problem):
    g = disk_problem.grid1
    X, Y = g.mesh()
    v = 0.25 * (X**2 + Y**2)
    i, j = g.nx // 2, g.ny // 2
    v[i, j] += 10 * g.hx**2
    rep = ma_residual(GridField(g, v, "phi"), disk_problem)
    R = np.nan_to_num(rep.field)
    bad = np.argwhere(R > 1e-10)
    assert len(bad) > 0
    assert np.all(np.abs(bad - [i, j]).max(axis=1) <= 1)
    assert R[i, j] > 1.0


def test_residual_rejects_out_of_range_gradient(disk_problem):
    X, Y = disk_problem.grid1.mesh()
    with pytest.raises(GradientOutOfRange):
        ma_residual(GridField(disk_problem.grid1, 0.5 * (X**2 + Y**2), "phi"), disk_problem)


def test_convexity_examples(disk_problem):
    g = disk_problem.grid1
    X, Y = g.mesh()
    bowl = convexity_check(GridField(g, 0.5 * (X**2 + Y**2)))
    assert bowl["fraction_nonconvex"] == 0.0
    assert bowl["min_eigenvalue"] == pytest.approx(1.0, abs=1e-9)
    assert convexity_check(GridField(g, -0.5 * (X**2 + Y**2)))["fraction_nonconvex"] == 1.0
    assert convexity_check(GridField(g, 0.5 * (X**2 - Y**2)))["fraction_nonconvex"] == 1.0


# --- failures ------------------------------------------------------------------


def test_degenerate_density():
    f1 = lambda x, y: np.where(x > 0.6, 1.0, 0.0)  # noqa: E731
    prob = MAProblem.build(Disk(1.0), f1, Annulus(0.0, 0.5), _const(1.0), 24, mass1=1.0, mass2=1.0)
    with pytest.raises(DegenerateDensity):
        solve(prob)


def test_no_convergence(disk_problem):
    with pytest.raises(NoConvergence, match="marginal error"):
        solve(disk_problem, SolverParams(max_iterations=1, marginal_tolerance=1e-10))


# --- properties ----------------------------------------------------------------


def test_mass_scaling_invariance(disk_solution):
    # multiplying both densities by k leaves the map unchanged
    prob = MAProblem.build(Disk(1.0), _const(3 / math.pi), Annulus(0.0, 0.5), _const(12 / math.pi), 64)
    res = solve(prob)
    d = res.gradient_map - disk_solution.gradient_map
    m = prob.mask1
    assert np.abs(d[m]).max() < 1e-6


def test_target_dilation_equivariance(disk_problem, disk_solution):
    # target radius 1/4 instead of 1/2: the map halves
    prob = MAProblem.build(Disk(1.0), _const(1 / math.pi), Annulus(0.0, 0.25), _const(16 / math.pi), 64)
    res = solve(prob)
    m = res.residual.interior
    d = res.gradient_map[m] - 0.5 * disk_solution.gradient_map[m]
    assert np.sqrt(np.mean(np.sum(d**2, axis=-1))) < 2 * prob.h2


def test_cyclical_monotonicity(disk_problem, disk_solution):
    X, Y = disk_problem.grid1.mesh()
    m = disk_problem.mask1
    P = np.stack([X[m], Y[m]], axis=-1)
    G = disk_solution.gradient_map[m]
    rng = np.random.default_rng(0)
    a, b = rng.integers(0, len(P), (2, 10_000))
    inner = np.sum((G[a] - G[b]) * (P[a] - P[b]), axis=-1)
    assert inner.min() >= -disk_problem.h


def test_gradient_stays_in_target(disk_problem, disk_solution):
    m = disk_problem.mask1
    r = np.hypot(disk_solution.gradient_map[..., 0], disk_solution.gradient_map[..., 1])[m]
    assert r.max() <= 0.5 + disk_problem.h2
    assert disk_solution.gradient_excess <= disk_problem.h2


def test_warm_start_reaches_same_solution(disk_problem, disk_solution):
    X, Y = disk_problem.grid1.mesh()
    res = solve(disk_problem, init=0.3 * (X**2 + Y**2) + 0.1 * X)
    m = disk_problem.mask1
    d = res.phi.values[m] - disk_solution.phi.values[m]
    assert np.std(d) < 1e-3


# --- refinement (entropic stage alone) ---------------------------------------------


def test_mesh_refinement_reduces_error():
    errs = []
    for n, eps in ((32, 2e-3), (64, 1e-3), (128, 5e-4)):
        prob = uniform_disk_problem(n)
        res = solve(prob, SolverParams(polish=False, eps_final=eps))
        errs.append(_grad_error(res, prob, lambda X, Y: (X / 2, Y / 2), interior=False))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.6 * errs[0]
