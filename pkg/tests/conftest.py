"""Shared fixtures: solved designs are expensive, so compute each once."""

import math

import numpy as np
import pytest

from metaphase.domains import Annulus, Disk
from metaphase.optics import MediumPair
from metaphase.scenarios import (
    MAProblem,
    Profile,
    Scenario,
    SourceSpec,
    TargetSpec,
    phase_from_potential,
    reduce_to_ma,
)
from metaphase.solver import SolverParams, solve

CAP = math.radians(40.0)

_ACCEPTANCE = []


def record_acceptance(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    _ACCEPTANCE.append((number, line))
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


def make_scenario(kind: str, transport: str, theta_max: float = CAP, source_profile=None) -> Scenario:
    media = MediumPair(1.0, 1.0) if transport == "reflect" else MediumPair(1.0, 1.5)
    src = SourceSpec(kind, Disk(1.0), source_profile or Profile())
    tgt = TargetSpec(-1 if transport == "reflect" else 1, theta_max)
    return Scenario(transport, src, tgt, media)


def uniform_disk_problem(resolution: int = 64) -> MAProblem:
    """Uniform unit disk to uniform disk of radius 1/2, unit mass."""
    return MAProblem.build(
        Disk(1.0),
        lambda x, y: np.full(np.shape(x), 1.0 / np.pi),
        Annulus(0.0, 0.5),
        lambda p, q: np.full(np.shape(p), 4.0 / np.pi),
        resolution,
    )


@pytest.fixture(scope="session")
def disk_problem():
    return uniform_disk_problem(64)


@pytest.fixture(scope="session")
def disk_solution(disk_problem):
    return solve(disk_problem, SolverParams())


@pytest.fixture(scope="session")
def designs():
    """Solved psi for the four uniform-source, 40 degree cap scenarios (cached)."""
    cache = {}

    def get(kind, transport):
        key = (kind, transport)
        if key not in cache:
            sc = make_scenario(kind, transport)
            prob = reduce_to_ma(sc, 64, normalize=True)
            sc = sc.with_target_scaled(prob.mass_scale)
            res = solve(prob)
            cache[key] = (sc, prob, res, phase_from_potential(res.phi, sc))
        return cache[key]

    return get
