"""Configuration parsing, grid files and the command-line workflow."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from metaphase.errors import FormatError, ParseError, ValidationError
from metaphase.grid import Grid, GridField
from metaphase.io.cli import main
from metaphase.io.config import PRESETS, REFLECTION_RULE, load_config, parse_config, preset_text
from metaphase.io.gridfile import format_grid, parse_grid, read_grid, write_grid
from metaphase.io.pipeline import HISTOGRAM_COLUMNS, design

MINIMAL = {
    "scenario": {"transport": "reflect", "source": "collimated"},
    "source": {"domain": {"shape": "disk", "radius": 1.0}},
    "target": {"theta_max": 0.5},
}


def _text(**over):
    d = json.loads(json.dumps(MINIMAL))
    for path, value in over.items():
        node = d
        keys = path.split("__")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    return json.dumps(d, indent=2)


def _small(name="uniform-disk", rays=200_000, resolution=32, **extra):
    # coarser bins keep the Monte-Carlo L1 floor well under tolerance at 2e5 rays
    d = json.loads(preset_text(name))
    d["grid"]["resolution"] = resolution
    d["verify"].update(rays=rays, bins_u=12, bins_v=12, energy_rays=50_000)
    d.update(extra)
    return d


def _write(path, obj):
    path.write_text(json.dumps(obj, indent=2) if isinstance(obj, dict) else obj)
    return str(path)


# --- parse_config ------------------------------------------------------------------


def test_minimal_config_fills_defaults():
    cfg = parse_config(_text())
    sc = cfg.scenario
    assert (sc.transport, sc.source.kind, sc.media.n1, sc.media.n2) == ("reflect", "collimated", 1.0, 1.0)
    assert sc.target.axis == -1 and sc.target.theta_min == 0.0
    assert cfg.resolution == 64 and cfg.verify.rays == 1_000_000 and cfg.verify.bins_u == 24
    assert cfg.solver.marginal_tolerance == 1e-4
    assert cfg.normalize_masses is False and cfg.plane_height == 1.0


def test_theta_max_beyond_equator():
    with pytest.raises(ValidationError, match="target cap reaches equator") as exc:
        parse_config(_text(target__theta_max=1.6))
    assert exc.value.path == "target.theta_max"
    assert exc.value.line == 13


def test_reflection_requires_equal_indices():
    with pytest.raises(ValidationError) as exc:
        parse_config(_text(scenario__n1=1.0, scenario__n2=1.5))
    assert REFLECTION_RULE in str(exc.value)
    assert "The case of reflection is when $n_1=n_2$" in str(exc.value)
    assert exc.value.path == "scenario.n2"


@pytest.mark.parametrize(
    "over, path",
    [
        ({"scenario__transport": "bounce"}, "scenario.transport"),
        ({"grid__resolution": 12.5}, "grid.resolution"),
        ({"target__colour": "red"}, "target.colour"),
        ({"source__intensity": {"profile": "gaussian"}}, "source.intensity"),
    ],
)
def test_parse_errors_name_the_field(over, path):
    with pytest.raises(ParseError) as exc:
        parse_config(_text(**over))
    assert exc.value.path == path
    assert path in str(exc.value)
    assert exc.value.line is not None


def test_malformed_json_reports_line():
    with pytest.raises(ParseError) as exc:
        parse_config('{\n  "scenario": {\n    "transport": "reflect",,\n  }\n}')
    assert exc.value.line == 3


def test_hemisphere_mismatch():
    with pytest.raises(ValidationError, match="upper hemisphere"):
        parse_config(_text(scenario__transport="refract", scenario__n2=1.5, target__axis=-1))


def test_point_source_footprint_scaled_to_unit_height():
    cfg = parse_config(
        _text(scenario__source="point", scenario__plane_height=2.0, source__domain={"shape": "disk", "radius": 1.0})
    )
    assert cfg.scenario.source.domain.radius == pytest.approx(0.5)


def test_power_normalization_of_intensity():
    cfg = parse_config(_text(source__intensity={"profile": "gaussian", "sigma": 0.5, "power": 2.0}))
    assert cfg.scenario.source.power() == pytest.approx(2.0, rel=1e-10)


def test_load_config_prefixes_path(tmp_path):
    p = _write(tmp_path / "bad.json", _text(target__theta_max=1.6))
    with pytest.raises(ValidationError, match="bad.json"):
        load_config(p)


def test_presets_parse():
    for name in PRESETS:
        cfg = parse_config(preset_text(name))
        assert cfg.normalize_masses and cfg.name == name


# --- grid files --------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (5, 7), elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_grid_round_trip_is_exact(values):
    f = GridField(Grid(5, 7, -0.3, 1e-17, 0.1, 1 / 3), values, "psi")
    back = parse_grid(format_grid(f))
    assert back.grid == f.grid
    assert back.quantity == "psi"
    assert np.array_equal(back.values, values)


def test_grid_header_layout():
    f = GridField(Grid(3, 4, 0.0, -1.0, 0.5, 0.25), np.zeros((3, 4)), "phi")
    lines = format_grid(f).splitlines()
    assert lines[0].split() == ["METAPHASE-GRID", "1", "3", "4", "0.0", "-1.0", "0.5", "0.25", "phi"]
    assert len(lines) == 4 and len(lines[1].split()) == 4


def test_truncated_grid_names_count(tmp_path):
    f = GridField(Grid(4, 4, 0.0, 0.0, 1.0, 1.0), np.arange(16.0).reshape(4, 4), "psi")
    p = tmp_path / "g.grid"
    write_grid(p, f)
    p.write_text("\n".join(p.read_text().splitlines()[:-1]) + "\n")
    with pytest.raises(FormatError, match=r"expected 16 values \(4 x 4\), found 12"):
        read_grid(p)


def test_grid_rejects_wrong_quantity_and_tag():
    f = GridField(Grid(3, 3, 0.0, 0.0, 1.0, 1.0), np.zeros((3, 3)), "phi")
    with pytest.raises(FormatError, match="quantity"):
        parse_grid(format_grid(f), quantity="psi")
    with pytest.raises(FormatError, match="tag"):
        parse_grid(format_grid(f).replace("METAPHASE-GRID", "GRID"))


# --- command line ------------------------------------------------------------------


def test_solve_and_verify_round_trip(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", _small())
    out = tmp_path / "run"
    assert main(["solve", "-c", cfg, "-o", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["solver"]["converged"] and rep["residual"]["median"] < 0.1
    assert set(rep) >= {"mass_balance", "gradient_range", "residual", "convexity"}
    assert any("scaled" in n for n in rep["notes"])
    for name in ("phase.grid", "potential.grid", "residual.grid"):
        parse_grid((out / name).read_text())
    # the stored phase re-parses to the in-memory value
    mem = design(load_config(cfg))
    assert np.array_equal(read_grid(out / "phase.grid").values, mem.psi.values)

    assert main(["verify", "-c", cfg, "--phase", str(out / "phase.grid"), "-o", str(out)]) == 0
    vr = json.loads((out / "verify_report.json").read_text())
    assert vr["passed"]
    assert set(vr["energy_balance"]) == {"full", "q1", "q2", "q3", "q4"}
    head = (out / "histogram.tsv").read_text().splitlines()[0]
    assert head == "# " + "\t".join(HISTOGRAM_COLUMNS)

    capsys.readouterr()
    assert main(["residual", "-c", cfg, "--phase", str(out / "phase.grid")]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["median"] < 0.1


def test_reports_are_deterministic(tmp_path):
    cfg = _write(tmp_path / "c.json", _small())
    texts = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["solve", "-c", cfg, "-o", str(out)]) == 0
        assert main(["verify", "-c", cfg, "--phase", str(out / "phase.grid"), "-o", str(out)]) == 0
        texts.append([(out / f).read_text() for f in ("report.json", "verify_report.json", "histogram.tsv", "phase.grid")])
    assert texts[0] == texts[1]


def test_mass_imbalance_exit_code(tmp_path):
    cfg = _write(tmp_path / "c.json", _small(normalize_masses=False))
    assert main(["solve", "-c", cfg, "-o", str(tmp_path / "o")]) == 3


def test_validation_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", _text(scenario__n2=1.5))
    assert main(["solve", "-c", cfg, "-o", str(tmp_path / "o")]) == 2
    assert REFLECTION_RULE in capsys.readouterr().err


def test_no_convergence_exit_code(tmp_path):
    d = _small()
    d["solver"] = {"max_iterations": 1, "marginal_tolerance": 1e-10}
    cfg = _write(tmp_path / "c.json", d)
    assert main(["solve", "-c", cfg, "-o", str(tmp_path / "o")]) == 4


def test_verify_flat_mirror_concentrates_mass(tmp_path):
    d = _small(rays=5_000)
    cfg = _write(tmp_path / "c.json", d)
    g = Grid.covering((-1, 1, -1, 1), 32)
    phase = tmp_path / "flat.grid"
    write_grid(phase, GridField(g, np.zeros(g.shape), "psi"))
    code = main(["verify", "-c", cfg, "--phase", str(phase), "-o", str(tmp_path / "v")])
    assert code == 5
    rows = np.loadtxt(tmp_path / "v" / "histogram.tsv")
    dens = rows[:, 3]
    assert np.count_nonzero(dens) == 1
    hit = rows[np.argmax(dens)]
    # (0, 0, -1) is the pole of the lower cap: innermost ring (its azimuth is arbitrary)
    assert hit[1] == rows[:, 1].max()


def test_verify_rejects_truncated_phase(tmp_path):
    cfg = _write(tmp_path / "c.json", _small())
    g = Grid.covering((-1, 1, -1, 1), 32)
    p = tmp_path / "bad.grid"
    write_grid(p, GridField(g, np.zeros(g.shape), "psi"))
    p.write_text(p.read_text()[:-200])
    assert main(["verify", "-c", cfg, "--phase", str(p), "-o", str(tmp_path / "v")]) == 2


def test_footprint_exit_code(tmp_path):
    cfg = _write(tmp_path / "c.json", _small())
    g = Grid.covering((-0.3, 0.3, -0.3, 0.3), 16)
    p = tmp_path / "small.grid"
    write_grid(p, GridField(g, np.zeros(g.shape), "psi"))
    assert main(["verify", "-c", cfg, "--phase", str(p), "-o", str(tmp_path / "v")]) == 5


def test_demo_uniform_disk(tmp_path):
    out = tmp_path / "demo"
    assert main(["demo", "uniform-disk", "-o", str(out), "--rays", "200000"]) == 0
    assert (out / "config.json").exists()
    vr = json.loads((out / "verify_report.json").read_text())
    assert vr["L1"] < 0.05
