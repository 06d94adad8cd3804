"""Design and verification workflows behind the command line.

Reports are plain JSON and contain no timings, so a run is a pure function
of the configuration (including its seed).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError, MassImbalance
from ..grid import Grid, GridField
from ..raytrace import density_distance, energy_balance, sphere_histogram, trace
from ..scenarios import MASS_RTOL, POINT, Scenario, phase_from_potential, potential_from_phase, reduce_to_ma
from ..solver import SolverResult, convexity_check, ma_residual, solve
from .config import DesignConfig
from .gridfile import read_grid, write_grid

PHASE_FILE = "phase.grid"
POTENTIAL_FILE = "potential.grid"
RESIDUAL_FILE = "residual.grid"
REPORT_FILE = "report.json"
VERIFY_REPORT_FILE = "verify_report.json"
HISTOGRAM_FILE = "histogram.tsv"
HISTOGRAM_COLUMNS = ("u_center", "v_center", "solid_angle", "measured_density", "target_density")
QUADRANTS = ("full", "q1", "q2", "q3", "q4")


def balanced_scenario(config: DesignConfig) -> tuple[Scenario, float]:
    """Scenario with the target rescaled to the source power when allowed.

    Returns the scenario and the applied factor (1 when already balanced).
    """
    sc = config.scenario
    p1, p2 = sc.source.power(), sc.target.power()
    rel = abs(p1 - p2) / p1
    if rel <= MASS_RTOL:
        return sc, 1.0
    if not config.normalize_masses:
        raise MassImbalance(p1, p2, rel)
    k = p1 / p2
    return sc.with_target_scaled(k), k


def _physical(field: GridField, config: DesignConfig) -> GridField:
    """Map a phase on z = 1 to the configured plane height (point sources only)."""
    a = config.plane_height
    if config.scenario.source.kind != POINT or a == 1.0:
        return field
    g = field.grid
    return GridField(Grid(g.nx, g.ny, g.x0 * a, g.y0 * a, g.hx * a, g.hy * a), field.values * a, field.quantity)


def _normalized(field: GridField, config: DesignConfig) -> GridField:
    a = config.plane_height
    if config.scenario.source.kind != POINT or a == 1.0:
        return field
    g = field.grid
    return GridField(Grid(g.nx, g.ny, g.x0 / a, g.y0 / a, g.hx / a, g.hy / a), field.values / a, field.quantity)


@dataclass
class SolveOutcome:
    report: dict
    result: SolverResult
    psi: GridField
    scenario: Scenario


def design(config: DesignConfig, init=None) -> SolveOutcome:
    """Solve without touching the disk."""
    problem = reduce_to_ma(
        config.scenario, config.resolution, config.target_resolution, normalize=config.normalize_masses
    )
    scenario = config.scenario.with_target_scaled(problem.mass_scale)
    result = solve(problem, config.solver, init=init)
    psi = phase_from_potential(result.phi, scenario)
    mask = problem.mask1
    gnorm = np.hypot(result.gradient_map[..., 0], result.gradient_map[..., 1])[mask]
    conv = convexity_check(result.phi, mask)
    report = {
        "name": config.name,
        "scenario": {
            "transport": scenario.transport,
            "source": scenario.source.kind,
            "n1": scenario.media.n1,
            "n2": scenario.media.n2,
            "plane_height": config.plane_height,
            "theta_min": scenario.target.theta_min,
            "theta_max": scenario.target.theta_max,
        },
        "mass_balance": {
            "source_power": problem.total_mass,
            "target_power_before_scaling": config.scenario.target.power(),
            "target_scale": problem.mass_scale,
        },
        "grid": {"nx": problem.grid1.nx, "ny": problem.grid1.ny, "h": problem.h},
        "solver": {
            "converged": bool(result.converged),
            "iterations": int(result.iterations_used),
            "marginal_error": result.marginal_error,
            "polished": bool(result.polished),
        },
        "residual": result.residual_stats,
        "convexity": {
            "min_eigenvalue": conv["min_eigenvalue"],
            "fraction_nonconvex": conv["fraction_nonconvex"],
        },
        "gradient_range": {
            "min_norm": float(gnorm.min()),
            "max_norm": float(gnorm.max()),
            "target_rho_max": scenario.target.rho_max,
            "excess_beyond_target": result.gradient_excess,
        },
        "notes": result.notes,
    }
    return SolveOutcome(report, result, psi, scenario)


def run_solve(config: DesignConfig, outdir, init=None) -> SolveOutcome:
    """Write ``phase.grid``, ``potential.grid``, ``residual.grid`` and ``report.json``."""
    os.makedirs(outdir, exist_ok=True)
    out = design(config, init)
    write_grid(os.path.join(outdir, PHASE_FILE), _physical(out.psi, config))
    write_grid(os.path.join(outdir, POTENTIAL_FILE), out.result.phi)
    write_grid(os.path.join(outdir, RESIDUAL_FILE), GridField(out.result.phi.grid, out.result.residual.field, "residual"))
    out.report["files"] = [PHASE_FILE, POTENTIAL_FILE, RESIDUAL_FILE]
    _write_json(os.path.join(outdir, REPORT_FILE), out.report)
    return out


def load_phase(config: DesignConfig, path) -> GridField:
    field = read_grid(path)
    if field.quantity != "psi":
        raise FormatError(f"{path}: expected a phase grid (quantity 'psi'), found {field.quantity!r}")
    return _normalized(field, config)


def verify_phase(config: DesignConfig, psi: GridField) -> tuple[dict, list]:
    """Trace, histogram and energy balance; returns the report and histogram rows."""
    scenario, _ = balanced_scenario(config)
    v = config.verify
    batch = trace(scenario, psi, v.rays, seed=v.seed)
    hist = sphere_histogram(batch, v.bins_u, v.bins_v, target=scenario.target)
    dist = density_distance(hist, scenario.target)
    balance = {
        name: energy_balance(scenario, psi, name, v.energy_rays, seed=v.seed)
        for name in QUADRANTS
    }
    checks = {
        "L1": dist["L1"] < v.l1_tolerance,
        "evanescent_fraction": batch.evanescent_fraction < v.evanescent_tolerance,
        "energy_balance_full": balance["full"]["rel_err"] < v.energy_tolerance,
    }
    report = {
        "name": config.name,
        "rays": v.rays,
        "seed": v.seed,
        "bins": [v.bins_u, v.bins_v],
        "L1": dist["L1"],
        "Linf": dist["Linf"],
        "Linf_bins": dist["bins_used"],
        "evanescent_fraction": batch.evanescent_fraction,
        "outside_cap_fraction": hist.outside_power / hist.traced_power,
        "traced_power": hist.traced_power,
        "binned_power": hist.binned_power,
        "evanescent_power": hist.evanescent_power,
        "energy_balance": balance,
        "checks": checks,
        "passed": all(checks.values()),
    }
    gt = scenario.target.g(hist.centers(), clamp=True)
    gt = gt * hist.binned_power / float(np.sum(gt * hist.bin_solid_angle))
    rows = []
    dens = hist.density
    for i, u in enumerate(hist.u_centers):
        for j, vc in enumerate(hist.v_centers):
            rows.append((u, vc, hist.bin_solid_angle, dens[i, j], gt[i, j]))
    return report, rows


def format_histogram(rows) -> str:
    lines = ["# " + "\t".join(HISTOGRAM_COLUMNS)]
    lines += ["\t".join(repr(float(v)) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def run_verify(config: DesignConfig, phase_path, outdir) -> dict:
    """Write ``verify_report.json`` and ``histogram.tsv``; returns the report."""
    psi = load_phase(config, phase_path)
    report, rows = verify_phase(config, psi)
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, HISTOGRAM_FILE), "w", encoding="utf-8") as fh:
        fh.write(format_histogram(rows))
    _write_json(os.path.join(outdir, VERIFY_REPORT_FILE), report)
    return report


def run_residual(config: DesignConfig, phase_path) -> dict:
    """Finite-difference MA residual of a stored phase on the configured grid."""
    scenario, _ = balanced_scenario(config)
    psi = load_phase(config, phase_path)
    problem = reduce_to_ma(scenario, config.resolution, config.target_resolution)
    if not psi.grid.compatible(problem.grid1):
        raise FormatError(
            f"{phase_path}: grid {psi.grid.nx}x{psi.grid.ny} does not match the configured "
            f"{problem.grid1.nx}x{problem.grid1.ny} design grid"
        )
    phi = potential_from_phase(psi, scenario)
    rep = ma_residual(phi, problem)
    conv = convexity_check(phi, problem.mask1)
    return {**rep.stats(), "min_eigenvalue": conv["min_eigenvalue"], "fraction_nonconvex": conv["fraction_nonconvex"]}


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
