import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from okstab.cli import ScenarioError, dumps17, fmt_float, main, parse_scenario, run

BASE = {
    "domain": {"kind": "rectangle", "Lx": 1.0, "Ly": 1.0, "nx": 48, "ny": 48},
    "config": {"type": "lamella", "a": 0.5},
    "gamma": 1.0,
    "nodes": 32,
    "seed": 7,
}


def write_scenario(tmp_path, extra=None, name="scn.json", **updates):
    data = {**BASE, **(updates or {})}
    if extra:
        data.update(extra)
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def read_report(out):
    return json.loads((out / "report.json").read_text())


def assert_svg_wellformed(path):
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")


def csv_header(path):
    return path.read_text().splitlines()[0]


# ----------------------------------------------------------------- parsing

def test_unknown_key_rejected_by_name(tmp_path):
    scn = write_scenario(tmp_path, extra={"gama": 1.0})
    with pytest.raises(ScenarioError, match="gama"):
        parse_scenario(scn)


def test_unknown_nested_key_rejected(tmp_path):
    scn = write_scenario(tmp_path, extra={"probe": {"sample": 5}})
    with pytest.raises(ScenarioError, match="sample"):
        parse_scenario(scn)


def test_bad_json_reported(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ScenarioError, match="JSON"):
        parse_scenario(p)


def test_main_exit_codes(tmp_path):
    scn = write_scenario(tmp_path, extra={"gama": 2.0})
    assert main(["energy", "--scenario", str(scn), "--out", str(tmp_path / "o")]) == 1
    good = write_scenario(tmp_path, name="ok.json")
    assert main(["energy", "--scenario", str(good), "--out", str(tmp_path / "o2")]) == 0


# ------------------------------------------------------------ serialization

def test_float_formatting_roundtrip():
    rng = np.random.default_rng(0)
    for x in rng.standard_normal(50) * 10.0 ** rng.integers(-12, 12, 50):
        assert float(fmt_float(float(x))) == float(x)


def test_dumps17_structure():
    s = dumps17({"a": 1.0 / 3.0, "b": [1, 2.5], "c": {"d": None, "e": True}})
    parsed = json.loads(s)
    assert parsed["a"] == pytest.approx(1.0 / 3.0, rel=1e-16)
    assert parsed["b"] == [1, 2.5]
    assert parsed["c"] == {"d": None, "e": True}


# ----------------------------------------------------------------- commands

def test_energy_command_artifacts(tmp_path):
    scn = write_scenario(tmp_path)
    out = tmp_path / "energy"
    assert run("energy", scn, out=out) == 0
    rep = read_report(out)
    assert rep["J"] == pytest.approx(rep["P"] + rep["NL"], rel=1e-12)
    assert rep["J"] == pytest.approx(1.0 + 1.0 / 12.0, rel=0.01)
    assert csv_header(out / "interface.csv") == "s,x,y,H,phi"
    assert csv_header(out / "field.csv") == "i,j,x,y,value"
    assert_svg_wellformed(out / "interface.svg")
    assert_svg_wellformed(out / "field.svg")
    assert (out / "meta.json").exists()


def test_critic_report_schema(tmp_path):
    scn = write_scenario(tmp_path)
    out = tmp_path / "critic"
    assert run("critic", scn, out=out) == 0
    rep = read_report(out)
    for key in ("J", "P", "NL", "lambda", "residual_sup", "residual_l2",
                "ortho_residual"):
        assert key in rep
    assert rep["residual_sup"] < 1e-2


def test_stability_exit_codes_track_verdict(tmp_path):
    scn = write_scenario(tmp_path)
    out = tmp_path / "stab"
    assert run("stability", scn, out=out) == 0
    assert read_report(out)["verdict"] == "stable"
    scn30 = write_scenario(tmp_path, name="g30.json", gamma=30.0)
    out30 = tmp_path / "stab30"
    assert run("stability", scn30, out=out30) == 2
    assert read_report(out30)["verdict"] == "unstable"
    assert_svg_wellformed(out30 / "mode.svg")


def test_dispersion_command(tmp_path):
    scn = write_scenario(tmp_path, extra={"dispersion": {"k_max": 2}})
    out = tmp_path / "disp"
    assert run("dispersion", scn, out=out) == 0
    rep = read_report(out)
    assert len(rep["modes"]) == 2
    assert all(m["rel_err"] < 0.02 for m in rep["modes"])
    assert csv_header(out / "dispersion.csv") == "k,mu_discrete,mu_oracle,rel_err"
    assert_svg_wellformed(out / "dispersion.svg")


def test_dispersion_refinement_ladder(tmp_path):
    scn = write_scenario(
        tmp_path,
        extra={"dispersion": {"k_max": 2, "refine": True}},
        domain={"kind": "rectangle", "Lx": 1.0, "Ly": 1.0, "nx": 128, "ny": 128},
        nodes=64,
    )
    out = tmp_path / "disp_ref"
    assert run("dispersion", scn, out=out) == 0
    rep = read_report(out)
    assert len(rep["coarse_modes"]) == 2
    assert all(entry["refined"] for entry in rep["converged"])


def test_probe_command_deterministic(tmp_path):
    scn = write_scenario(
        tmp_path,
        extra={"probe": {"samples": 50, "amplitudes": [1e-2, 3e-2]}},
        nodes=32,
    )
    out1, out2 = tmp_path / "p1", tmp_path / "p2"
    assert run("probe", scn, out=out1) == 0
    assert run("probe", scn, out=out2) == 0
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    assert csv_header(out1 / "probe.csv") == "symdiff,dJ,amplitude"
    assert_svg_wellformed(out1 / "probe.svg")
    # a different seed changes the report
    out3 = tmp_path / "p3"
    assert run("probe", scn, out=out3, seed=99) == 0
    assert (out1 / "report.json").read_bytes() != (out3 / "report.json").read_bytes()


def test_flow_command(tmp_path):
    scn = write_scenario(tmp_path, extra={"flow": {"steps": 20}})
    out = tmp_path / "flow"
    assert run("flow", scn, out=out) == 0
    rep = read_report(out)
    assert rep["J_final"] <= rep["J_initial"] * (1 + 1e-6)
    assert rep["area_drift_max"] <= 1e-9
    assert csv_header(out / "flow.csv") == "t,J,residual_sup,area"


def test_gammastar_command(tmp_path):
    scn = write_scenario(
        tmp_path, extra={"gammastar": {"bracket": [1.0, 30.0], "tol": 0.01}}
    )
    out = tmp_path / "gs"
    assert run("gammastar", scn, out=out) == 0
    rep = read_report(out)
    assert rep["gamma_star"] == pytest.approx(16.13, rel=0.03)
    assert len(rep["ladder"]) == 13
    assert_svg_wellformed(out / "gammastar.svg")


def test_diffuse_command(tmp_path):
    scn = write_scenario(
        tmp_path,
        extra={"diffuse": {"epsilon": 0.08, "steps": 200, "init": "step", "a": 0.5}},
    )
    out = tmp_path / "diff"
    assert run("diffuse", scn, out=out) == 0
    rep = read_report(out)
    assert rep["E_final"] <= rep["E_initial"]
    assert rep["mass_drift"] <= 1e-10
    assert csv_header(out / "diffuse.csv") == "t,E,mass"
    assert_svg_wellformed(out / "field.svg")


def test_grid_and_nodes_overrides(tmp_path):
    scn = write_scenario(tmp_path)
    out = tmp_path / "ov"
    assert run("energy", scn, out=out, grid=64, nodes=48) == 0
    rep = read_report(out)
    assert rep["scenario"]["domain"]["nx"] == 64
    assert rep["scenario"]["nodes"] == 48


def test_torus_scenario(tmp_path):
    scn = write_scenario(
        tmp_path,
        domain={"kind": "torus", "Lx": 1.0, "Ly": 1.0, "nx": 48, "ny": 48},
        config={"type": "circle", "center": [0.5, 0.5], "radius": 0.2},
        gamma=0.0,
        nodes=48,
    )
    out = tmp_path / "torus"
    assert run("critic", scn, out=out) == 0
    rep = read_report(out)
    assert rep["lambda"] == pytest.approx(5.0, rel=0.01)
    assert rep["ortho_residual"] == []


def test_explicit_node_list_scenario(tmp_path):
    y = np.linspace(0.0, 1.0, 24)
    pts = [[0.45 + 0.03 * math.cos(2 * math.pi * t), t] for t in y]
    scn = write_scenario(
        tmp_path, config={"type": "nodes", "points": pts, "topology": "chord"}
    )
    out = tmp_path / "nodes"
    assert run("energy", scn, out=out) == 0
    assert read_report(out)["J"] > 1.0


def test_unknown_key_error_carries_line_number(tmp_path):
    p = tmp_path / "lined.json"
    p.write_text('{\n  "domain": {"kind": "rectangle", "Lx": 1.0, "Ly": 1.0,'
                 ' "nx": 48, "ny": 48},\n  "config": {"type": "lamella", "a": 0.5},\n'
                 '  "gama": 1.0\n}\n')
    with pytest.raises(ScenarioError, match=r"gama.*line 4"):
        parse_scenario(p)
