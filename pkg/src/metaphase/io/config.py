"""Design configuration: one JSON object, validated into physics objects.

Diagnostics carry the dotted field path and, where it can be located, the
line in the original text.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

from ..domains import Disk, Rect
from ..errors import ConfigError, DomainTouchesEquator, ParseError, ValidationError
from ..optics import MediumPair
from ..scenarios import MAX_CAP_ANGLE, Profile, Scenario, SourceSpec, TargetSpec
from ..solver import SolverParams

REFLECTION_RULE = "The case of reflection is when $n_1=n_2$"

_TOP = {"scenario", "source", "target", "grid", "solver", "verify", "normalize_masses", "name"}
_SCENARIO = {"transport", "source", "n1", "n2", "plane_height"}
_SOURCE = {"domain", "intensity"}
_TARGET = {"axis", "theta_min", "theta_max", "intensity"}
_GRID = {"resolution", "target_resolution"}
_SOLVER = {
    "epsilon_schedule", "eps_start", "eps_final", "max_iterations",
    "marginal_tolerance", "polish", "polish_iterations",
}
_VERIFY = {
    "rays", "bins_u", "bins_v", "seed", "energy_rays",
    "l1_tolerance", "energy_tolerance", "evanescent_tolerance",
}
_INTENSITY = {"profile", "sigma", "amplitude", "power"}


@dataclass
class VerifyParams:
    rays: int = 1_000_000
    bins_u: int = 24
    bins_v: int = 24
    seed: int = 0
    energy_rays: int = 200_000
    l1_tolerance: float = 0.05
    energy_tolerance: float = 0.01
    evanescent_tolerance: float = 1e-3


@dataclass
class DesignConfig:
    scenario: Scenario
    resolution: int = 64
    target_resolution: int | None = None
    solver: SolverParams = field(default_factory=SolverParams)
    verify: VerifyParams = field(default_factory=VerifyParams)
    normalize_masses: bool = False
    plane_height: float = 1.0
    name: str = "design"
    raw: dict = field(default_factory=dict, repr=False)


class _Locator:
    """Best-effort mapping from a dotted field path to a line of the source text."""

    def __init__(self, text: str):
        self.text = text

    def line(self, path: str):
        pos = 0
        for key in path.split("."):
            if key.isdigit():
                continue
            m = re.compile(r'"' + re.escape(key) + r'"\s*:').search(self.text, pos)
            if m is None:
                return None
            pos = m.start()
        return self.text.count("\n", 0, pos) + 1 if path else None


class _Reader:
    def __init__(self, text: str):
        self.loc = _Locator(text)

    def parse_error(self, path, msg):
        return ParseError(msg, path, self.loc.line(path))

    def invalid(self, path, msg):
        return ValidationError(msg, path, self.loc.line(path))

    def obj(self, data, path, allowed, required=()):
        if not isinstance(data, dict):
            raise self.parse_error(path, f"expected an object, got {type(data).__name__}")
        for k in data:
            if k not in allowed:
                sub = f"{path}.{k}" if path else k
                raise self.parse_error(sub, f"unknown field {k!r}")
        for k in required:
            if k not in data:
                raise self.parse_error(path, f"missing required field {k!r}")
        return data

    def number(self, data, key, path, default=None, positive=False, allow_none=False):
        sub = f"{path}.{key}"
        if key not in data:
            return default
        v = data[key]
        if v is None and allow_none:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.parse_error(sub, f"expected a number, got {json.dumps(v)}")
        v = float(v)
        if not math.isfinite(v):
            raise self.invalid(sub, "must be finite")
        if positive and v <= 0:
            raise self.invalid(sub, f"must be positive, got {v}")
        return v

    def integer(self, data, key, path, default=None, minimum=None, allow_none=False):
        sub = f"{path}.{key}"
        if key not in data:
            return default
        v = data[key]
        if v is None and allow_none:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.parse_error(sub, f"expected an integer, got {json.dumps(v)}")
        if minimum is not None and v < minimum:
            raise self.invalid(sub, f"must be >= {minimum}, got {v}")
        return v

    def boolean(self, data, key, path, default):
        if key not in data:
            return default
        v = data[key]
        if not isinstance(v, bool):
            raise self.parse_error(f"{path}.{key}" if path else key, f"expected true or false, got {json.dumps(v)}")
        return v

    def choice(self, data, key, path, options, default=None):
        sub = f"{path}.{key}"
        if key not in data:
            if default is None:
                raise self.parse_error(path, f"missing required field {key!r}")
            return default
        v = data[key]
        if v not in options:
            raise self.parse_error(sub, f"expected one of {', '.join(map(repr, options))}, got {json.dumps(v)}")
        return v


def _domain(rd: _Reader, data, path, scale: float):
    if not isinstance(data, dict):
        raise rd.parse_error(path, "expected an object")
    shape = rd.choice(data, "shape", path, ("disk", "rect"))
    if shape == "disk":
        rd.obj(data, path, {"shape", "radius", "center"}, ("radius",))
        r = rd.number(data, "radius", path, positive=True)
        c = data.get("center", [0.0, 0.0])
        if not (isinstance(c, list) and len(c) == 2 and all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in c)):
            raise rd.parse_error(f"{path}.center", "expected [x, y]")
        return Disk(r / scale, c[0] / scale, c[1] / scale)
    rd.obj(data, path, {"shape", "xmin", "xmax", "ymin", "ymax"}, ("xmin", "xmax", "ymin", "ymax"))
    vals = [rd.number(data, k, path) for k in ("xmin", "xmax", "ymin", "ymax")]
    if not (vals[0] < vals[1] and vals[2] < vals[3]):
        raise rd.invalid(path, "rectangle needs xmin < xmax and ymin < ymax")
    return Rect(*(v / scale for v in vals))


def _intensity(rd: _Reader, data, path):
    """Returns ``(profile, power)``; ``power`` set means rescale to that total."""
    if data is None:
        return Profile(), None
    rd.obj(data, path, _INTENSITY)
    kind = rd.choice(data, "profile", path, ("uniform", "gaussian"), default="uniform")
    sigma = rd.number(data, "sigma", path, positive=True)
    if kind == "gaussian" and sigma is None:
        raise rd.parse_error(path, "gaussian profile needs 'sigma'")
    if kind == "uniform" and sigma is not None:
        raise rd.invalid(f"{path}.sigma", "sigma only applies to the gaussian profile")
    if "amplitude" in data and "power" in data:
        raise rd.invalid(path, "give either 'amplitude' or 'power', not both")
    amp = rd.number(data, "amplitude", path, default=1.0, positive=True)
    power = rd.number(data, "power", path, positive=True)
    return Profile(kind, amp, sigma), power


def parse_config(text: str) -> DesignConfig:
    """Parse and validate a JSON design document.

    Raises
    ------
    ParseError
        Malformed JSON, unknown fields or wrongly typed values.
    ValidationError
        Well-formed input that violates a physical invariant.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, "", exc.lineno) from None
    rd = _Reader(text)
    rd.obj(data, "", _TOP, ("scenario", "source", "target"))

    sc = rd.obj(data["scenario"], "scenario", _SCENARIO, ("transport", "source"))
    transport = rd.choice(sc, "transport", "scenario", ("reflect", "refract"))
    kind = rd.choice(sc, "source", "scenario", ("collimated", "point"))
    n1 = rd.number(sc, "n1", "scenario", 1.0, positive=True)
    n2 = rd.number(sc, "n2", "scenario", n1 if transport == "reflect" else 1.0, positive=True)
    a = rd.number(sc, "plane_height", "scenario", 1.0, positive=True)
    if transport == "reflect" and n1 != n2:
        raise rd.invalid("scenario.n2", f"reflect needs n1 == n2 (got n1={n1}, n2={n2}); {REFLECTION_RULE}")

    src = rd.obj(data["source"], "source", _SOURCE, ("domain",))
    # point sources: the footprint is given on z = a; solve on z = 1
    domain = _domain(rd, src["domain"], "source.domain", a if kind == "point" else 1.0)
    s_prof, s_power = _intensity(rd, src.get("intensity"), "source.intensity")
    source = SourceSpec(kind, domain, s_prof)
    if s_power is not None:
        source = source.scaled(s_power / source.power())

    tg = rd.obj(data["target"], "target", _TARGET, ("theta_max",))
    want_axis = -1 if transport == "reflect" else 1
    axis = rd.integer(tg, "axis", "target", want_axis)
    if axis not in (-1, 1):
        raise rd.invalid("target.axis", f"cap axis sign must be +1 or -1, got {axis}")
    if axis != want_axis:
        side = "lower" if want_axis < 0 else "upper"
        raise rd.invalid("target.axis", f"{transport} scenarios need a target cap in the {side} hemisphere")
    th1 = rd.number(tg, "theta_max", "target")
    th0 = rd.number(tg, "theta_min", "target", 0.0)
    if th1 >= 0.5 * math.pi:
        raise rd.invalid("target.theta_max", f"target cap reaches equator (theta_max={th1} rad >= pi/2)")
    if th1 > MAX_CAP_ANGLE + 1e-12:
        raise rd.invalid("target.theta_max", f"theta_max={th1} rad exceeds the 80 degree limit")
    if not 0 <= th0 < th1:
        raise rd.invalid("target.theta_min", "need 0 <= theta_min < theta_max")
    t_prof, t_power = _intensity(rd, tg.get("intensity"), "target.intensity")
    try:
        target = TargetSpec(axis, th1, th0, t_prof)
    except DomainTouchesEquator as exc:
        raise rd.invalid("target.theta_max", str(exc)) from None
    if t_power is not None:
        target = target.scaled(t_power / target.power())

    try:
        scenario = Scenario(transport, source, target, MediumPair(n1, n2))
    except ValueError as exc:
        raise rd.invalid("scenario", str(exc)) from None

    gr = rd.obj(data.get("grid", {}), "grid", _GRID)
    res = rd.integer(gr, "resolution", "grid", 64, minimum=16)
    tres = rd.integer(gr, "target_resolution", "grid", None, minimum=16, allow_none=True)

    so = rd.obj(data.get("solver", {}), "solver", _SOLVER)
    sched = so.get("epsilon_schedule")
    if sched is not None:
        if not (isinstance(sched, list) and sched and all(isinstance(e, (int, float)) and not isinstance(e, bool) for e in sched)):
            raise rd.parse_error("solver.epsilon_schedule", "expected a non-empty list of numbers")
    try:
        solver = SolverParams(
            epsilon_schedule=sched,
            eps_start=rd.number(so, "eps_start", "solver", 0.1, positive=True),
            eps_final=rd.number(so, "eps_final", "solver", 1e-3, positive=True),
            max_iterations=rd.integer(so, "max_iterations", "solver", 5000, minimum=1),
            marginal_tolerance=rd.number(so, "marginal_tolerance", "solver", 1e-4, positive=True),
            polish=rd.boolean(so, "polish", "solver", True),
            polish_iterations=rd.integer(so, "polish_iterations", "solver", 40, minimum=0),
        )
    except ValueError as exc:
        raise rd.invalid("solver", str(exc)) from None

    ve = rd.obj(data.get("verify", {}), "verify", _VERIFY)
    verify = VerifyParams(
        rays=rd.integer(ve, "rays", "verify", 1_000_000, minimum=1),
        bins_u=rd.integer(ve, "bins_u", "verify", 24, minimum=1),
        bins_v=rd.integer(ve, "bins_v", "verify", 24, minimum=1),
        seed=rd.integer(ve, "seed", "verify", 0, minimum=0),
        energy_rays=rd.integer(ve, "energy_rays", "verify", 200_000, minimum=1),
        l1_tolerance=rd.number(ve, "l1_tolerance", "verify", 0.05, positive=True),
        energy_tolerance=rd.number(ve, "energy_tolerance", "verify", 0.01, positive=True),
        evanescent_tolerance=rd.number(ve, "evanescent_tolerance", "verify", 1e-3, positive=True),
    )
    name = data.get("name", "design")
    if not isinstance(name, str):
        raise rd.parse_error("name", "expected a string")
    return DesignConfig(
        scenario=scenario,
        resolution=res,
        target_resolution=tres,
        solver=solver,
        verify=verify,
        normalize_masses=rd.boolean(data, "normalize_masses", "", False),
        plane_height=a,
        name=name,
        raw=data,
    )


def load_config(path) -> DesignConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_config(text)
    except ConfigError as exc:
        exc.args = (f"{path}: {exc}",)
        raise


PRESETS = {
    "uniform-disk": {
        "name": "uniform-disk",
        "scenario": {"transport": "reflect", "source": "collimated", "n1": 1.0, "n2": 1.0},
        "source": {"domain": {"shape": "disk", "radius": 1.0}, "intensity": {"profile": "uniform"}},
        "target": {"axis": -1, "theta_max": math.radians(40.0), "intensity": {"profile": "uniform"}},
        "grid": {"resolution": 64},
        "verify": {"rays": 1_000_000, "bins_u": 24, "bins_v": 24, "seed": 1},
        "normalize_masses": True,
    },
    "gaussian-to-ring": {
        "name": "gaussian-to-ring",
        "scenario": {"transport": "refract", "source": "collimated", "n1": 1.0, "n2": 1.5},
        "source": {
            "domain": {"shape": "disk", "radius": 1.0},
            "intensity": {"profile": "gaussian", "sigma": 0.5},
        },
        "target": {
            "axis": 1,
            "theta_min": math.radians(15.0),
            "theta_max": math.radians(35.0),
            "intensity": {"profile": "uniform"},
        },
        "grid": {"resolution": 64},
        "solver": {"eps_final": 2.5e-4},
        # the ring is not convex: no Newton polish, so allow for entropic blur
        "verify": {"rays": 1_000_000, "bins_u": 24, "bins_v": 24, "seed": 1, "energy_tolerance": 0.03},
        "normalize_masses": True,
    },
}


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    return json.dumps(PRESETS[name], indent=2)
