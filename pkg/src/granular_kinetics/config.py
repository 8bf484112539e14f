"""Run configuration (INI with sections) and the run manifest.

Sections: [restitution], [kernel], [solver], [diagnostics], [output],
[seed].  Unknown keys are rejected so typos fail loudly before a run
starts.  The canonical form of a parsed configuration (sorted JSON of
the resolved values, seed included) is hashed into the manifest; equal
(config, seed, version) therefore means equal hash, and the simulation
core guarantees equal output bytes.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import time
from dataclasses import dataclass, field

from . import __version__
from .diagnostics import DiagnosticsOptions
from .dsmc import InitialCondition, SolverConfig
from .errors import InputError
from .operator import KernelSpec
from .restitution import RestitutionModel

_KNOWN_KEYS = {
    "restitution": {"kind", "e0", "a", "coeffs", "tolerance"},
    "kernel": {"potential", "angular"},
    "solver": {"mode", "n", "initial", "theta0", "thetas", "fractions", "radius",
               "t_end", "dt", "dt_mode", "target_collision_prob", "majorant_margin",
               "xi_table", "theta_drift_tolerance"},
    "diagnostics": {"entropy", "l1", "d1", "records", "rows_per_decade", "interval",
                    "l1_bins", "d1_pairs"},
    "output": {"path", "format"},
    "seed": {"master"},
}


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


@dataclass
class RunSpec:
    """Validated, resolved description of one simulation run."""

    model: RestitutionModel
    kernel: KernelSpec
    solver: SolverConfig
    initial: InitialCondition
    n: int
    t_end: float
    diagnostics: DiagnosticsOptions
    record_mode: str          # "log" | "linear"
    rows_per_decade: int
    record_interval: float
    out_path: str
    out_format: str
    master_seed: int
    raw: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        return self.raw

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def parse_config(path: str, seed_override: int | None = None,
                 out_override: str | None = None) -> RunSpec:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise InputError(f"configuration file not found: {path}")
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise InputError(f"unknown config section [{section}]")
        unknown = set(parser[section]) - _KNOWN_KEYS[section]
        if unknown:
            raise InputError(f"unknown keys in [{section}]: {sorted(unknown)}")

    rest = parser["restitution"] if parser.has_section("restitution") else {}
    kind = rest.get("kind", "elastic").lower()
    spec: dict = {"kind": kind,
                  "tolerance": float(rest.get("tolerance", 1e-10))}
    if kind == "constant":
        spec["e0"] = float(rest.get("e0", 1.0))
    elif kind == "viscoelastic":
        spec["a"] = float(rest.get("a", 0.2))
    elif kind == "series":
        spec["coeffs"] = list(_floats(rest.get("coeffs", "0.2")))
    model = RestitutionModel.from_dict(spec)

    ker = parser["kernel"] if parser.has_section("kernel") else {}
    kernel = KernelSpec(potential=ker.get("potential", "hard_sphere"),
                        angular=ker.get("angular", "true_hard_sphere"))

    sol = parser["solver"] if parser.has_section("solver") else {}
    init_kind = sol.get("initial", "maxwellian").lower()
    initial = InitialCondition(
        kind=init_kind,
        theta=float(sol.get("theta0", 1.0)),
        thetas=_floats(sol.get("thetas", "0.25 1.75")),
        fractions=_floats(sol.get("fractions", "0.5 0.5")),
        radius=float(sol.get("radius", 1.0)))
    xi_table: tuple = ()
    if sol.get("xi_table", ""):
        rows = []
        with open(sol["xi_table"]) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                t_val, xi_val = line.replace(",", " ").split()[:2]
                rows.append((float(t_val), float(xi_val)))
        xi_table = tuple(rows)
    solver = SolverConfig(
        mode=sol.get("mode", "original"),
        model=model, kernel=kernel,
        dt=float(sol.get("dt", 0.01)),
        dt_mode=sol.get("dt_mode", "auto"),
        target_collision_prob=float(sol.get("target_collision_prob", 0.2)),
        majorant_margin=float(sol.get("majorant_margin", 1.5)),
        xi_table=xi_table,
        theta_drift_tolerance=float(sol.get("theta_drift_tolerance", 0.05)))
    n = int(float(sol.get("n", 10_000)))
    t_end = float(sol.get("t_end", 10.0))

    dia = parser["diagnostics"] if parser.has_section("diagnostics") else {}
    diagnostics = DiagnosticsOptions(
        entropy=dia.get("entropy", "false").lower() == "true",
        l1=dia.get("l1", "false").lower() == "true",
        d1=dia.get("d1", "false").lower() == "true",
        d1_pairs=int(float(dia.get("d1_pairs", 50_000))),
        l1_bins=int(dia.get("l1_bins", 64)))
    record_mode = dia.get("records", "log")
    if record_mode not in ("log", "linear"):
        raise InputError("diagnostics.records must be 'log' or 'linear'")
    rows_per_decade = int(dia.get("rows_per_decade", 12))
    record_interval = float(dia.get("interval", max(t_end / 32.0, 1e-9)))

    out = parser["output"] if parser.has_section("output") else {}
    out_path = out_override or out.get("path", "run.jsonl")
    out_format = out.get("format", "jsonl")
    if out_format not in ("jsonl", "csv"):
        raise InputError("output.format must be 'jsonl' or 'csv'")

    seed_sec = parser["seed"] if parser.has_section("seed") else {}
    master_seed = int(seed_override if seed_override is not None
                      else seed_sec.get("master", 0))

    raw = {
        "restitution": spec,
        "kernel": {"potential": kernel.potential, "angular": kernel.angular},
        "solver": {"mode": solver.mode, "n": n, "initial": init_kind,
                   "theta0": initial.theta, "thetas": list(initial.thetas),
                   "fractions": list(initial.fractions), "radius": initial.radius,
                   "t_end": t_end, "dt": solver.dt, "dt_mode": solver.dt_mode,
                   "target_collision_prob": solver.target_collision_prob,
                   "majorant_margin": solver.majorant_margin,
                   "xi_table": [list(r) for r in xi_table],
                   "theta_drift_tolerance": solver.theta_drift_tolerance},
        "diagnostics": {"entropy": diagnostics.entropy, "l1": diagnostics.l1,
                        "d1": diagnostics.d1, "records": record_mode,
                        "rows_per_decade": rows_per_decade,
                        "interval": record_interval, "l1_bins": diagnostics.l1_bins,
                        "d1_pairs": diagnostics.d1_pairs},
        "output": {"format": out_format},
        "seed": {"master": master_seed},
    }
    return RunSpec(model=model, kernel=kernel, solver=solver, initial=initial,
                   n=n, t_end=t_end, diagnostics=diagnostics,
                   record_mode=record_mode, rows_per_decade=rows_per_decade,
                   record_interval=record_interval, out_path=out_path,
                   out_format=out_format, master_seed=master_seed, raw=raw)


@dataclass
class RunManifest:
    config_hash: str
    master_seed: int
    tool_version: str
    start_wall_time: float
    end_wall_time: float
    outputs: list

    def as_dict(self) -> dict:
        return {"config_hash": self.config_hash, "master_seed": self.master_seed,
                "tool_version": self.tool_version,
                "start_wall_time": self.start_wall_time,
                "end_wall_time": self.end_wall_time, "outputs": self.outputs}


def start_manifest(config_hash: str, master_seed: int) -> RunManifest:
    return RunManifest(config_hash, master_seed, __version__, time.time(), 0.0, [])


def manifest_stub(inputs: dict, master_seed: int) -> dict:
    """Lightweight provenance block embedded in single-report commands."""
    blob = json.dumps(inputs, sort_keys=True).encode()
    return {"config_hash": hashlib.sha256(blob).hexdigest(),
            "master_seed": master_seed, "tool_version": __version__}
