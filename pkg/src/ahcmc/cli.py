"""Config-driven command line: ``ahcmc <command> <config> [--output-dir DIR]``.

Exit status: 0 success, 1 configuration error, 2 solver error.
"""
from __future__ import annotations

import argparse
import csv
import copy
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import ambient, conformal, s2grid, solver, verify
from .surface import GraphSurface
from .verify import fmt, rows_to_csv

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2

_COEFFS = {
    "type": "array",
    "items": {
        "type": "object",
        "additionalProperties": False,
        "required": ["l", "m", "value"],
        "properties": {"l": {"type": "integer", "minimum": 0}, "m": {"type": "integer"}, "value": {"type": "number"}},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["metric"],
    "properties": {
        "metric": {
            "type": "object",
            "additionalProperties": False,
            "required": ["mass_aspect"],
            "properties": {
                "mass_aspect": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"constant": {"type": "number"}, "coeffs": _COEFFS},
                },
                "boost": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                "recenter": {"type": "boolean"},
                "q": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["amplitude", "profile"],
                    "properties": {
                        "amplitude": {"type": "number"},
                        "profile": _COEFFS,
                        "structure": {"type": "array", "items": {"enum": ["rr", "tt", "rt"]}, "minItems": 1},
                    },
                },
                "t": {"type": "number", "minimum": 0, "maximum": 1},
                "r1": {"type": "number", "exclusiveMinimum": 0},
                "hypothesis": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {k: {"type": "number", "exclusiveMinimum": 0} for k in ("C1", "C2", "C3", "C4")},
                },
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"L": {"type": "integer", "minimum": 8, "maximum": 64}},
        },
        "regime": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"r0": {"type": "number", "minimum": 0}, "l_max": {"type": "number", "exclusiveMinimum": 2}},
        },
        "solve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "l": {"type": "number"},
                "r_hat_guess": {"type": "number", "exclusiveMinimum": 0},
                "tol": {"type": "number"},
                "max_iter": {"type": "integer", "minimum": 1},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "l_values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "lapse_fd": {"type": "boolean"},
            },
        },
        "family": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"t_steps": {"type": "integer", "minimum": 1}, "l": {"type": "number"}},
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "r_hat_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 3},
                "inner_r_hat_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "ambient_radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 3},
                "uniformize": {"type": "boolean"},
                "label": {"type": "string"},
            },
        },
        "report": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"inputs": {"type": "array", "items": {"type": "string"}}},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}, "minItems": 1},
            },
        },
    },
}

DEFAULTS = {
    "grid": {"L": 24},
    "regime": {"r0": 2.0, "l_max": 2.1},
    "solve": {"tol": 1e-12, "max_iter": 40},
    "sweep": {"lapse_fd": True},
    "family": {"t_steps": 10},
    "verify": {
        "r_hat_values": [4.0, 5.0, 6.0],
        "inner_r_hat_values": [2.5, 3.0, 3.5],
        "ambient_radii": [3.0, 4.0, 5.0, 6.0],
        "uniformize": True,
        "label": "run",
    },
    "report": {"inputs": []},
    "output": {"directory": "ahcmc_out", "formats": ["csv", "json"]},
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return validate_config(doc)


def validate_config(doc) -> dict:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    cfg = copy.deepcopy(DEFAULTS)
    for k, v in doc.items():
        if isinstance(v, dict):
            cfg.setdefault(k, {}).update(v)
        else:
            cfg[k] = v
    ma = cfg["metric"]["mass_aspect"]
    if "constant" not in ma and "coeffs" not in ma:
        raise ConfigError("metric.mass_aspect needs 'constant' or 'coeffs'")
    return cfg


def config_hash(cfg: dict) -> str:
    """Hash of everything except the output section."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


def _check_l(cfg: dict, l: float, where: str) -> float:
    l = float(l)
    if not l > 2.0:
        raise ConfigError(f"{where}: l must exceed 2 (got {l})")
    if l > cfg["regime"]["l_max"]:
        raise ConfigError(f"{where}: l={l} above regime.l_max={cfg['regime']['l_max']}")
    return l


def build_spec(cfg: dict) -> ambient.AmbientMetricSpec:
    m = cfg["metric"]
    ma = m["mass_aspect"]
    coeffs = np.zeros(1)
    if "coeffs" in ma:
        coeffs = s2grid.from_triples(ma["coeffs"])
    if "constant" in ma:
        coeffs = coeffs.copy()
        coeffs[0] += ma["constant"] * math.sqrt(4.0 * math.pi)
    tau = ambient.MassAspect(coeffs)
    L = cfg["grid"]["L"]
    if "boost" in m:
        tau = conformal.transform_mass_aspect(tau, conformal.MobiusBoost.from_vector(m["boost"]), L=L)
    if m.get("recenter", False):
        tau = conformal.center_mass_aspect(tau, L=L).mass_aspect
    q = None
    if "q" in m:
        q = ambient.QTerm(m["q"]["amplitude"], s2grid.from_triples(m["q"]["profile"]), tuple(m["q"].get("structure", ["rr"])))
    hyp = ambient.HypothesisConstants(**m.get("hypothesis", {}))
    return ambient.AmbientMetricSpec(tau, q, t=float(m.get("t", 1.0)), r1=float(m.get("r1", 1.0)), hypothesis=hyp)


def l_for_radius(spec: ambient.AmbientMetricSpec, r_hat: float, grid: s2grid.GridS2) -> float:
    """Mean of the coordinate-sphere mean curvature at r_hat; the leaf lands near r_hat."""
    return float(grid.integrate(ambient.coordinate_sphere_H(spec, r_hat, grid)) / (4.0 * math.pi))


def threads() -> int:
    try:
        return max(1, int(os.environ.get("AHCMC_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    n = min(threads(), len(items)) or 1
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# artifacts


class Output:
    def __init__(self, directory, command: str, chash: str):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.chash = chash
        self.files: list[str] = []

    def write(self, name: str, text: str):
        (self.dir / name).write_text(text)
        if name not in self.files:
            self.files.append(name)

    def manifest(self, complete: bool, note: str = ""):
        lines = [f"command {self.command}", f"config_hash {self.chash}", f"status {'complete' if complete else 'incomplete'}"]
        if note:
            lines.append("note " + " ".join(note.split()))
        for name in sorted(self.files):
            digest = hashlib.sha256((self.dir / name).read_bytes()).hexdigest()
            lines.append(f"file {name} {digest}")
        (self.dir / "MANIFEST").write_text("\n".join(lines) + "\n")


def leaf_name(l: float) -> str:
    return f"leaf_{l:.12g}.rec"


def leaf_record(spec, leaf: solver.FoliationLeaf, cfg: dict, chash: str) -> str:
    geom = leaf.geometry
    res = verify.identity_residuals(spec, leaf)
    if leaf.stability_eigenvalue is None:
        solver.attach_stability(leaf)
    items = [
        ("config_hash", chash),
        ("l", leaf.l),
        ("t", leaf.t),
        ("r_hat", geom.r_hat),
        ("area", geom.total_area),
        ("inner_radius", leaf.surface.inner_radius),
        ("outer_radius", leaf.surface.outer_radius),
        ("below_r0", geom.r_hat < cfg["regime"]["r0"]),
        ("mean_H", geom.mean(geom.H)),
        ("sup_H_minus_l", float(np.max(np.abs(geom.H - leaf.l)))),
        ("sup_w", float(np.max(np.abs(geom.f)))),
        ("ringA_sq_sup", float(np.max(geom.ringA_sq))),
        ("stability_P", leaf.stability_eigenvalue),
        ("stability_L", leaf.normalized_eigenvalue),
        ("oscillation_ok", solver.oscillation_ok(leaf)),
        ("newton_iterations", len(leaf.newton_history) - 1),
        ("newton_final_residual", leaf.newton_history[-1]),
        ("grid_L", geom.grid.L),
    ]
    items += [(f"residual.{k}", v) for k, v in sorted(res.items())]
    for row in s2grid.to_triples(leaf.surface.rho_coeffs):
        items.append((f"rho.{row['l']}.{row['m']}", row["value"]))
    return "".join(f"{k} = {fmt(v)}\n" for k, v in items)


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: dict, out: Output) -> int:
    spec = build_spec(cfg)
    grid = s2grid.build_grid(cfg["grid"]["L"])
    s = cfg["solve"]
    if "l" not in s:
        raise ConfigError("solve.l is required")
    l = _check_l(cfg, s["l"], "cmd_solve")
    guess = GraphSurface.round(grid, s["r_hat_guess"]) if "r_hat_guess" in s else None
    leaf = solver.cmc_solve(solver.CmcProblem(spec, l, grid, s["tol"], s["max_iter"]), guess)
    solver.attach_stability(leaf)
    out.write(leaf_name(l), leaf_record(spec, leaf, cfg, out.chash))
    return EXIT_OK


SWEEP_HEADER = [
    "l", "r_hat", "inner_radius", "outer_radius", "lapse_mean", "lapse_min", "lapse_max", "lapse_ratio",
    "lapse_fd_defect", "stability_L", "oscillation_ok", "lapse_single_signed", "nested", "config_hash",
]


def cmd_sweep(cfg: dict, out: Output) -> int:
    spec = build_spec(cfg)
    grid = s2grid.build_grid(cfg["grid"]["L"])
    lv = cfg["sweep"].get("l_values")
    if not lv:
        raise ConfigError("sweep.l_values is required")
    lv = [_check_l(cfg, v, "cmd_sweep") for v in lv]
    leaves = solver.foliation_sweep(spec, lv, grid, cfg["solve"]["tol"], cfg["solve"]["max_iter"], cfg["sweep"]["lapse_fd"])
    rows = []
    prev = None
    for leaf in leaves:
        phi = leaf.lapse
        fd = float(np.max(np.abs(leaf.lapse_fd - phi)) / np.max(np.abs(phi))) if leaf.lapse_fd is not None else None
        nested = True if prev is None else leaf.surface.inner_radius > prev.surface.outer_radius
        rows.append([
            leaf.l, leaf.r_hat, leaf.surface.inner_radius, leaf.surface.outer_radius, leaf.lapse_mean,
            float(phi.min()), float(phi.max()), solver.lapse_ratio(phi), fd, leaf.normalized_eigenvalue,
            solver.oscillation_ok(leaf), bool(phi.min() * phi.max() > 0), nested, out.chash,
        ])
        out.write(leaf_name(leaf.l), leaf_record(spec, leaf, cfg, out.chash))
        prev = leaf
    out.write("sweep.csv", rows_to_csv(SWEEP_HEADER, rows))
    return EXIT_OK


FAMILY_HEADER = ["t", "r_hat", "stability_P", "stability_L", "oscillation_ok", "newton_iterations", "sup_w", "config_hash"]


def cmd_family(cfg: dict, out: Output) -> int:
    spec = build_spec(cfg)
    grid = s2grid.build_grid(cfg["grid"]["L"])
    fam = cfg["family"]
    l = fam.get("l", cfg["solve"].get("l"))
    if l is None:
        raise ConfigError("family.l (or solve.l) is required")
    l = _check_l(cfg, l, "cmd_family")
    try:
        leaves = solver.continuation_in_t(spec, l, grid, fam["t_steps"], cfg["solve"]["tol"], cfg["solve"]["max_iter"])
    except solver.ContinuationError as exc:
        rows = [_family_row(lf, out.chash) for lf in (exc.accepted or [])]
        out.write("family.csv", rows_to_csv(FAMILY_HEADER, rows))
        raise
    rows = [_family_row(lf, out.chash) for lf in leaves]
    end = leaves[-1]
    direct = solver.cmc_solve(solver.CmcProblem(spec, l, grid, cfg["solve"]["tol"], cfg["solve"]["max_iter"]), end.surface)
    agree = float(np.max(np.abs(direct.surface.rho - end.surface.rho)))
    out.write("family.csv", rows_to_csv(FAMILY_HEADER, rows))
    out.write(leaf_name(l), leaf_record(spec, end, cfg, out.chash) + f"endpoint_vs_direct = {fmt(agree)}\n")
    return EXIT_OK


def _family_row(lf, chash):
    return [lf.t, lf.r_hat, lf.stability_eigenvalue, lf.normalized_eigenvalue, solver.oscillation_ok(lf),
            len(lf.newton_history) - 1, float(np.max(np.abs(lf.geometry.f))), chash]


def run_verify(cfg: dict) -> tuple[verify.EstimateReport, list]:
    spec = build_spec(cfg)
    grid = s2grid.build_grid(cfg["grid"]["L"])
    v = cfg["verify"]
    tol, it = cfg["solve"]["tol"], cfg["solve"]["max_iter"]

    def solve_at(r):
        l = l_for_radius(spec, r, grid)
        return solver.cmc_solve(solver.CmcProblem(spec, l, grid, tol, it), GraphSurface.round(grid, r))

    leaves = _pmap(solve_at, v["r_hat_values"])
    inner = _pmap(solve_at, v["inner_r_hat_values"])
    rep = verify.build_report(v["label"], spec, leaves, grid, v["ambient_radii"], v["uniformize"], inner)
    rep.metadata["r0"] = cfg["regime"]["r0"]
    rep.metadata["below_r0"] = [q["r_hat"] for q in rep.leaves if q["r_hat"] < cfg["regime"]["r0"]]
    return rep, leaves


def cmd_verify(cfg: dict, out: Output) -> int:
    rep, leaves = run_verify(cfg)
    spec = leaves[0].spec
    for leaf in leaves:
        out.write(leaf_name(leaf.l), leaf_record(spec, leaf, cfg, out.chash))
    fmts = cfg["output"]["formats"]
    if "csv" in fmts:
        out.write("estimates.csv", rows_to_csv(verify.ROW_HEADER, rep.rows(out.chash)))
    if "json" in fmts:
        doc = rep.to_document()
        doc["config_hash"] = out.chash
        out.write("estimates.json", verify.dumps(doc) + "\n")
    return EXIT_OK


def cmd_report(cfg: dict, out: Output) -> int:
    """Merge estimates.csv and sweep.csv tables from prior runs into report.csv."""
    inputs = [Path(p) for p in cfg["report"]["inputs"]] or [out.dir]
    header = ["source", "table", "key", "value", "config_hash"]
    rows = []
    for d in inputs:
        for table in ("estimates.csv", "sweep.csv", "family.csv"):
            f = d / table
            if not f.exists():
                continue
            with f.open(newline="") as fh:
                for i, rec in enumerate(csv.DictReader(fh)):
                    h = rec.get("config_hash", "")
                    for k, v in rec.items():
                        if k == "config_hash":
                            continue
                        rows.append([d.name, table, f"{i}.{k}", v, h])
    if not rows:
        raise ConfigError("cmd_report: no estimates.csv, sweep.csv or family.csv found in inputs")
    out.write("report.csv", rows_to_csv(header, rows))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "family": cmd_family, "verify": cmd_verify, "report": cmd_report}

SOLVER_ERRORS = (
    solver.SolverError,
    conformal.UniformizationError,
    conformal.CenteringError,
    ambient.DomainError,
    np.linalg.LinAlgError,
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ahcmc", description="CMC leaves in asymptotically hyperbolic ends")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("config", help="JSON or YAML run configuration")
    parser.add_argument("--output-dir", default=None)
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    directory = args.output_dir or cfg["output"]["directory"]
    out = Output(directory, args.command, config_hash(cfg))
    try:
        status = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        out.manifest(False, str(exc))
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        print(f"error: {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        out.manifest(False, f"{type(exc).__name__}: {exc}")
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        out.manifest(False, str(exc))
        return EXIT_CONFIG
    out.manifest(True)
    return status


if __name__ == "__main__":
    sys.exit(main())
