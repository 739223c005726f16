"""Batch front-end: scenario files in, reports/CSVs/SVGs out.

One command per invocation::

    okstab <command> --scenario <path> [--out <dir>] [--grid N] [--nodes N] [--seed S]

Commands: energy, critic, stability, dispersion, probe, flow, gammastar,
diffuse.  Every run writes ``report.json`` (deterministic: same scenario and
seed give byte-identical bytes; floats carry 17 significant digits),
``meta.json`` (timestamps and versions, excluded from the determinism
contract), data CSVs, and SVG figures.

Exit codes: 0 success, 1 error (parse or numerical), 2 when the stability
command reaches the verdict "unstable" (scriptable without JSON parsing).
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .diffuse import (
    conserved_gradient_flow,
    constant_state,
    energy_parts,
    interface_width,
    step_cap,
    step_state,
)
from .domain import RECTANGLE, TORUS, DomainSpec
from .energy import criticality
from .field import SolverError
from .interface import (
    Interface,
    RegionState,
    arclengths,
    curvature,
    make_circle,
    make_lamella,
    perimeter,
    resample_count,
)
from .probe import (
    DEFAULT_AMPLITUDES,
    build_lamella_form,
    flow_step_cap,
    gamma_threshold_search,
    lambda_minimality_check,
    minimality_probe,
    mu_min_at_gamma,
    volume_preserving_flow,
)
from .secondvar import apply_form, lamella_dispersion, stability_report
from . import plots

COMMANDS = ("energy", "critic", "stability", "dispersion", "probe", "flow",
            "gammastar", "diffuse")


class ScenarioError(ValueError):
    """Scenario file rejected; the message names the offending key."""


# ---------------------------------------------------------------------------
# strict scenario parsing
# ---------------------------------------------------------------------------

_TOP_KEYS = {"domain", "config", "gamma", "nodes", "seed", "out",
             "dispersion", "probe", "flow", "gammastar", "diffuse"}
_DOMAIN_KEYS = {"kind", "Lx", "Ly", "nx", "ny", "corner_margin"}
_CONFIG_KEYS = {
    "lamella": {"type", "a"},
    "circle": {"type", "center", "radius"},
    "nodes": {"type", "points", "topology"},
}
_SECTION_KEYS = {
    "dispersion": {"k_max", "refine"},
    "probe": {"samples", "amplitudes", "modes", "lambda_check"},
    "flow": {"dt", "steps", "record_every"},
    "gammastar": {"bracket", "tol", "k_max", "truncated"},
    "diffuse": {"epsilon", "gamma0", "m", "dt", "steps", "init", "a", "record_every"},
}


def _key_line(text: str, key: str) -> str:
    """Best-effort line locator for error messages."""
    needle = json.dumps(str(key))
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return f" (line {lineno})"
    return ""


def _check_keys(mapping: dict, allowed: set, where: str, text: str = "") -> None:
    if not isinstance(mapping, dict):
        raise ScenarioError(f"{where} must be a JSON object")
    for key in mapping:
        if key not in allowed:
            raise ScenarioError(f"unknown key {key!r} in {where}{_key_line(text, key)}")


def parse_scenario(path) -> dict:
    """Load and strictly validate a scenario file (unknown keys rejected)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        data = json.loads(text)
    except (OSError, json.JSONDecodeError) as err:
        raise ScenarioError(f"scenario is not valid JSON: {err}") from err
    _check_keys(data, _TOP_KEYS, "scenario", text)
    if "domain" not in data:
        raise ScenarioError("missing key 'domain' in scenario")
    if "config" not in data:
        raise ScenarioError("missing key 'config' in scenario")
    _check_keys(data["domain"], _DOMAIN_KEYS, "scenario.domain", text)
    cfg = data["config"]
    if not isinstance(cfg, dict) or "type" not in cfg:
        raise ScenarioError("scenario.config must carry a 'type'")
    if cfg["type"] not in _CONFIG_KEYS:
        raise ScenarioError(f"unknown key {cfg['type']!r} in scenario.config.type")
    _check_keys(cfg, _CONFIG_KEYS[cfg["type"]], "scenario.config", text)
    for section, keys in _SECTION_KEYS.items():
        if section in data:
            _check_keys(data[section], keys, f"scenario.{section}", text)
    return data


def build_domain(data: dict, grid_override: int | None = None) -> DomainSpec:
    dom = dict(data["domain"])
    if grid_override is not None:
        dom["nx"] = dom["ny"] = int(grid_override)
    kind = dom.pop("kind", RECTANGLE)
    if kind not in (RECTANGLE, TORUS):
        raise ScenarioError(f"unknown key {kind!r} in scenario.domain.kind")
    try:
        return DomainSpec(kind, **dom)
    except (TypeError, ValueError) as err:
        raise ScenarioError(f"bad domain: {err}") from err


def build_interface(data: dict, spec: DomainSpec, nodes_override: int | None) -> Interface:
    cfg = data["config"]
    n = int(nodes_override or data.get("nodes", 128))
    try:
        if cfg["type"] == "lamella":
            return make_lamella(float(cfg["a"]), n, spec)
        if cfg["type"] == "circle":
            return make_circle(cfg["center"], float(cfg["radius"]), n)
        iface = Interface(np.asarray(cfg["points"], float), cfg["topology"])
        return resample_count(iface, n)
    except (KeyError, ValueError) as err:
        raise ScenarioError(f"bad config: {err}") from err


def build_state(data: dict, grid: int | None = None, nodes: int | None = None) -> RegionState:
    spec = build_domain(data, grid)
    iface = build_interface(data, spec, nodes)
    try:
        return RegionState(iface, spec, gamma=float(data.get("gamma", 0.0)))
    except ValueError as err:
        raise ScenarioError(f"bad configuration: {err}") from err


# ---------------------------------------------------------------------------
# deterministic serialization (17 significant digits)
# ---------------------------------------------------------------------------

def fmt_float(x: float) -> str:
    if isinstance(x, float) and (math.isnan(x) or math.isinf(x)):
        return '"%s"' % repr(x)
    return format(float(x), ".17g")


def dumps17(obj, indent: int = 0) -> str:
    """JSON text with every float printed at 17 significant digits."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            f'{pad}  {json.dumps(str(k))}: {dumps17(v, indent + 1)}' for k, v in obj.items()
        )
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            return "[]"
        items = ",\n".join(f"{pad}  {dumps17(v, indent + 1)}" for v in obj)
        return "[\n" + items + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj))
    return json.dumps(obj)


def write_report(out: Path, report: dict) -> None:
    (out / "report.json").write_text(dumps17(report) + "\n", encoding="utf-8")


def write_meta(out: Path, command: str, scenario_path) -> None:
    meta = {
        "command": command,
        "scenario": str(scenario_path),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "okstab_version": __version__,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format(float(x), ".17g") if isinstance(x, (float, np.floating))
                        else x for x in row])


def interface_csv(path: Path, state: RegionState, phi=None) -> None:
    iface = state.interface
    s = arclengths(iface)
    H = curvature(iface)
    phi = np.zeros(iface.n) if phi is None else np.asarray(phi, float)
    rows = zip(s, iface.nodes[:, 0], iface.nodes[:, 1], H, phi)
    write_csv(path, ["s", "x", "y", "H", "phi"], rows)


def field_csv(path: Path, f) -> None:
    spec = f.spec
    x, y = (np.arange(spec.nx) + 0.5) * spec.hx, (np.arange(spec.ny) + 0.5) * spec.hy
    rows = []
    for i in range(spec.nx):
        for j in range(spec.ny):
            rows.append((i, j, x[i], y[j], f.values[i, j]))
    write_csv(path, ["i", "j", "x", "y", "value"], rows)


def _echo(data: dict, command: str, seed: int | None = None) -> dict:
    echo = {
        "command": command,
        "domain": data["domain"],
        "config": data["config"],
        "gamma": float(data.get("gamma", 0.0)),
        "nodes": int(data.get("nodes", 128)),
    }
    if seed is not None:
        echo["seed"] = int(seed)
    return echo


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------

def cmd_energy(data, out: Path, state: RegionState, seed: int) -> int:
    rep = criticality(state)
    report = {
        "scenario": _echo(data, "energy"),
        "J": rep.J, "P": rep.P, "NL": rep.NL,
        "area": state.area, "m": state.m,
    }
    write_report(out, report)
    interface_csv(out / "interface.csv", state)
    field_csv(out / "field.csv", state.v)
    plots.render_interface(out / "interface.svg", state.interface, state.domain,
                           title="interface")
    plots.render_heatmap(out / "field.svg", state.v, title="potential",
                         iface=state.interface)
    return 0


def cmd_critic(data, out: Path, state: RegionState, seed: int) -> int:
    rep = criticality(state)
    report = {"scenario": _echo(data, "critic"), **rep.to_dict()}
    write_report(out, report)
    interface_csv(out / "interface.csv", state, phi=rep.residual_nodes)
    field_csv(out / "field.csv", state.v)
    plots.render_interface(out / "interface.svg", state.interface, state.domain,
                           title="interface (phi column: balance residual)")
    plots.render_heatmap(out / "field.svg", state.v, title="potential",
                         iface=state.interface)
    return 0


def cmd_stability(data, out: Path, state: RegionState, seed: int) -> int:
    rep = stability_report(state)
    report = {"scenario": _echo(data, "stability"), **rep.to_dict()}
    write_report(out, report)
    interface_csv(out / "interface.csv", state, phi=rep.mode)
    plots.render_interface(out / "mode.svg", state.interface, state.domain,
                           mode=rep.mode, title=f"minimal mode (mu_min = {rep.mu_min:.4g})")
    plots.render_heatmap(out / "field.svg", state.v, title="potential",
                         iface=state.interface)
    return 2 if rep.verdict == "unstable" else 0


def _dispersion_rows(state: RegionState, a: float, k_max: int):
    sig = arclengths(state.interface) / perimeter(state.interface)
    rows = []
    for k in range(1, k_max + 1):
        phi = np.cos(math.pi * k * sig)
        discrete = apply_form(state, phi)
        oracle = lamella_dispersion(a, state.gamma, k)
        rows.append((k, discrete, oracle, abs(discrete - oracle) / abs(oracle)))
    return rows


def cmd_dispersion(data, out: Path, state: RegionState, seed: int) -> int:
    cfg = data["config"]
    if cfg["type"] != "lamella":
        raise ScenarioError("dispersion requires a lamella configuration")
    a = float(cfg["a"])
    sect = data.get("dispersion", {})
    k_max = int(sect.get("k_max", 3))
    rows = _dispersion_rows(state, a, k_max)
    report = {
        "scenario": _echo(data, "dispersion"),
        "modes": [
            {"k": k, "discrete": d, "oracle": o, "rel_err": r} for k, d, o, r in rows
        ],
    }
    if sect.get("refine", False):
        # half-resolution ladder: errors should not grow under refinement
        spec = state.domain
        coarse_spec = DomainSpec(spec.kind, spec.Lx, spec.Ly,
                                 max(16, spec.nx // 2), max(16, spec.ny // 2))
        coarse = RegionState(
            make_lamella(a, max(16, state.interface.n // 2), coarse_spec),
            coarse_spec, gamma=state.gamma,
        )
        crows = _dispersion_rows(coarse, a, k_max)
        report["coarse_modes"] = [
            {"k": k, "discrete": d, "oracle": o, "rel_err": r} for k, d, o, r in crows
        ]
        report["converged"] = [
            {"k": rows[i][0], "refined": rows[i][3] <= crows[i][3] + 1e-4}
            for i in range(len(rows))
        ]
    write_report(out, report)
    write_csv(out / "dispersion.csv", ["k", "mu_discrete", "mu_oracle", "rel_err"], rows)
    plots.render_dispersion(out / "dispersion.svg",
                            [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows])
    return 0


def cmd_probe(data, out: Path, state: RegionState, seed: int) -> int:
    sect = data.get("probe", {})
    n = int(sect.get("samples", 100))
    amplitudes = tuple(sect.get("amplitudes", DEFAULT_AMPLITUDES))
    modes = int(sect.get("modes", 8))
    rep = minimality_probe(state, n=n, amplitudes=amplitudes, seed=seed, modes=modes)
    report = {"scenario": _echo(data, "probe", seed), **rep.to_dict()}
    if sect.get("lambda_check", False):
        report["lambda_ratio_max_gross"] = lambda_minimality_check(
            state, n=max(50, n // 2), seed=seed, amplitudes=amplitudes, modes=modes)
    write_report(out, report)
    write_csv(out / "probe.csv", ["symdiff", "dJ", "amplitude"], rep.samples)
    plots.render_probe_scatter(out / "probe.svg", rep.samples)
    return 0


def cmd_flow(data, out: Path, state: RegionState, seed: int) -> int:
    sect = data.get("flow", {})
    dt = sect.get("dt")
    dt = 0.5 * flow_step_cap(state) if dt is None else float(dt)
    steps = int(sect.get("steps", 200))
    res = volume_preserving_flow(state, dt, steps,
                                 record_every=int(sect.get("record_every", 0)))
    drift = float(np.max(np.abs(res.log[:, 3] - state.area)))
    report = {
        "scenario": _echo(data, "flow"),
        "steps": steps, "dt_initial": dt, "dt_final": res.dt_final,
        "J_initial": res.log[0, 1], "J_final": res.log[-1, 1],
        "residual_sup_final": res.log[-1, 2], "area_drift_max": drift,
    }
    write_report(out, report)
    write_csv(out / "flow.csv", ["t", "J", "residual_sup", "area"], res.log)
    interface_csv(out / "interface.csv", res.final)
    plots.render_interface(out / "interface.svg", res.final.interface, state.domain,
                           title="final interface")
    plots.render_curve(out / "flow.svg", res.log[:, 0], res.log[:, 1], "t", "J")
    return 0


def cmd_gammastar(data, out: Path, state_unused, seed: int) -> int:
    cfg = data["config"]
    if cfg["type"] != "lamella":
        raise ScenarioError("gammastar requires a lamella configuration")
    sect = data.get("gammastar", {})
    bracket = tuple(sect.get("bracket", (0.0, 30.0)))
    tol = float(sect.get("tol", 1e-3))
    k_max = int(sect.get("k_max", 3))
    truncated = bool(sect.get("truncated", False))
    spec = build_domain(data)
    n_nodes = int(data.get("nodes", 128))
    a = float(cfg["a"])
    _, form = build_lamella_form(a, spec, n_nodes,
                                 n_modes=4 * k_max if truncated else None)
    ladder = np.linspace(bracket[0], bracket[1], 13)
    mus = [mu_min_at_gamma(form, g) for g in ladder]
    gamma_star = gamma_threshold_search(a, k_max, tol, bracket=bracket, form=form)
    report = {
        "scenario": _echo(data, "gammastar"),
        "gamma_star": gamma_star, "bracket": list(bracket), "tol": tol,
        "ladder": [{"gamma": float(g), "mu_min": m} for g, m in zip(ladder, mus)],
    }
    write_report(out, report)
    write_csv(out / "gammastar.csv", ["gamma", "mu_min"], zip(ladder, mus))
    plots.render_curve(out / "gammastar.svg", ladder, mus, "gamma", "mu_min", hline=0.0)
    return 0


def cmd_diffuse(data, out: Path, state_unused, seed: int) -> int:
    sect = data.get("diffuse", {})
    spec = build_domain(data)
    eps = float(sect.get("epsilon", 0.04))
    gamma0 = float(sect.get("gamma0", 0.0))
    init = sect.get("init", "step")
    if init == "constant":
        ds = constant_state(spec, float(sect.get("m", 0.0)), eps, gamma0)
    elif init == "step":
        ds = step_state(spec, float(sect.get("a", 0.5)), eps, gamma0)
    else:
        raise ScenarioError(f"unknown key {init!r} in scenario.diffuse.init")
    dt = sect.get("dt")
    dt = 0.9 * step_cap(ds) if dt is None else float(dt)
    steps = int(sect.get("steps", 2000))
    e0_parts = energy_parts(ds)
    res = conserved_gradient_flow(ds, dt, steps,
                                  record_every=int(sect.get("record_every", 100)))
    e1_parts = energy_parts(res.state)
    report = {
        "scenario": _echo(data, "diffuse"),
        "epsilon": eps, "gamma0": gamma0, "m": res.state.m,
        "steps": steps, "dt_initial": dt, "dt_final": res.dt_final,
        "E_initial": sum(e0_parts), "E_final": sum(e1_parts),
        "E_parts_final": {"gradient": e1_parts[0], "well": e1_parts[1],
                          "nonlocal": e1_parts[2]},
        "mass_drift": abs(float(res.state.field.mean) - float(res.state.m)),
    }
    if init == "step":
        try:
            report["interface_width"] = interface_width(res.state)
        except ValueError:
            report["interface_width"] = None
    write_report(out, report)
    write_csv(out / "diffuse.csv", ["t", "E", "mass"], res.log)
    plots.render_heatmap(out / "field.svg", res.state.field, title="phase field")
    return 0


_NEEDS_STATE = {"energy", "critic", "stability", "dispersion", "probe", "flow"}
_RUNNERS = {
    "energy": cmd_energy, "critic": cmd_critic, "stability": cmd_stability,
    "dispersion": cmd_dispersion, "probe": cmd_probe, "flow": cmd_flow,
    "gammastar": cmd_gammastar, "diffuse": cmd_diffuse,
}


def run(command: str, scenario_path, out=None, grid: int | None = None,
        nodes: int | None = None, seed: int | None = None) -> int:
    """Execute one command against a scenario file; returns the exit status."""
    if command not in _RUNNERS:
        raise ScenarioError(f"unknown command {command!r}")
    data = parse_scenario(scenario_path)
    out_dir = Path(out or data.get("out") or f"okstab_runs/{command}")
    out_dir.mkdir(parents=True, exist_ok=True)
    the_seed = int(seed if seed is not None else data.get("seed", 0))
    state = build_state(data, grid, nodes) if command in _NEEDS_STATE else None
    if grid is not None:
        data = {**data, "domain": {**data["domain"], "nx": int(grid), "ny": int(grid)}}
    if nodes is not None:
        data = {**data, "nodes": int(nodes)}
    status = _RUNNERS[command](data, out_dir, state, the_seed)
    write_meta(out_dir, command, scenario_path)
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="okstab",
        description="Sharp-interface stability analyzer: energies, criticality, "
                    "second-variation certificates, minimality probes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} analysis")
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--grid", type=int, default=None, help="override nx = ny")
        p.add_argument("--nodes", type=int, default=None, help="override node count")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
    args = parser.parse_args(argv)
    try:
        return run(args.command, args.scenario, out=args.out, grid=args.grid,
                   nodes=args.nodes, seed=args.seed)
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, SolverError, OSError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
