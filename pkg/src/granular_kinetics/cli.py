"""The ``gk`` command line tool.

Subcommands: simulate, spreading-check, rate-fit, haff-fit,
entropy-report.  Every subcommand is deterministic under a fixed seed
and emits JSON (reports) or JSON Lines (simulation diagnostics) with a
provenance block.  Exit codes: 0 success, 2 configuration/validation
error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .config import RunSpec, manifest_stub, parse_config, start_manifest
from .densities import IsotropicMaxwellian
from .diagnostics import entropy_balance_check, write_jsonl
from .dsmc import init_ensemble, log_schedule, run_original, run_rescaled
from .errors import (InputError, InstabilityError, InsufficientSamplesError,
                     NonUniformGridError, NumericError, SelfConsistencyError,
                     TimestepError, UnsupportedKernelError)
from .operator import lambda_rate_fit, spreading_certificate
from .restitution import RestitutionModel
from .rngtools import derive_rng
from .scaling import build_trajectory, haff_fit

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

# streams are fixed so results do not depend on the thread count
N_STREAMS = 8


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get("GK_THREADS", "1")))


def _model_from_args(args) -> RestitutionModel:
    kind = args.kind
    if kind == "elastic":
        return RestitutionModel.elastic()
    if kind == "constant":
        return RestitutionModel.constant(args.e0)
    if kind == "viscoelastic":
        return RestitutionModel.viscoelastic(args.a)
    raise InputError(f"unsupported model kind {kind!r}")


def _write_report(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _records_to_csv(records, path: str) -> None:
    rows = [asdict(r) for r in records]
    for row in rows:
        row["momentum"] = " ".join(repr(x) for x in row["momentum"])
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def _run_simulation(spec: RunSpec):
    ensemble = init_ensemble(spec.n, spec.initial, spec.master_seed)
    if spec.record_mode == "log":
        times = log_schedule(spec.t_end, spec.rows_per_decade)
    else:
        times = np.arange(0.0, spec.t_end + 1e-12, spec.record_interval)
    if spec.solver.mode == "original":
        return run_original(spec.solver, ensemble, spec.t_end, record_times=times,
                            diagnostics=spec.diagnostics,
                            gamma_for_fit=spec.model.gamma)
    return run_rescaled(spec.solver, ensemble, spec.t_end, record_times=times,
                        diagnostics=spec.diagnostics)


def cmd_simulate(args) -> int:
    spec = parse_config(args.config, args.seed, args.out)
    manifest = start_manifest(spec.config_hash(), spec.master_seed)
    result = _run_simulation(spec)
    out_format = args.format or spec.out_format
    if out_format == "csv":
        _records_to_csv(result.records, spec.out_path)
    else:
        write_jsonl(result.records, spec.out_path)
    manifest.outputs.append(spec.out_path)
    manifest.end_wall_time = time.time()
    manifest_path = spec.out_path + ".manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest.as_dict(), fh, indent=2, sort_keys=True)
    print(f"wrote {len(result.records)} records to {spec.out_path} "
          f"(config {manifest.config_hash[:12]})")
    return EXIT_OK


def cmd_spreading_check(args) -> int:
    model = _model_from_args(args)
    inputs = {"command": "spreading-check", "model": model.describe(),
              "delta": args.delta, "chi": args.chi, "samples": args.samples,
              "seed": args.seed}
    rng = derive_rng(args.seed, "spreading")
    cert = spreading_certificate(model, args.delta, np.zeros(3), args.chi,
                                 args.samples, rng,
                                 floor_threads=_threads(args))
    report = {"inputs": inputs, "manifest": manifest_stub(inputs, args.seed),
              **cert.as_dict(), "pass": cert.passed}
    _write_report(report, args.out)
    return EXIT_OK if cert.passed else EXIT_NUMERIC


def cmd_rate_fit(args) -> int:
    model = _model_from_args(args)
    if model.gamma <= 0:
        raise InputError("rate-fit needs a model with gamma > 0 (viscoelastic)")
    lambdas = [float(x) for x in args.lambdas.split(",")]
    inputs = {"command": "rate-fit", "model": model.describe(), "lambdas": lambdas,
              "weight_order": args.weight_order, "samples": args.samples,
              "theta": args.theta, "seed": args.seed}
    rng = derive_rng(args.seed, "rate-fit")
    maxwellian = IsotropicMaxwellian(args.theta)
    fit = lambda_rate_fit(model, maxwellian, maxwellian, lambdas,
                          weight_order=args.weight_order,
                          n_samples=args.samples, rng=rng)
    passed = bool(abs(fit["slope"] - model.gamma) <= args.slope_tolerance)
    report = {"inputs": inputs, "manifest": manifest_stub(inputs, args.seed),
              **fit, "expected_slope": model.gamma,
              "slope_tolerance": args.slope_tolerance, "pass": passed}
    _write_report(report, args.out)
    return EXIT_OK if passed else EXIT_NUMERIC


def cmd_haff_fit(args) -> int:
    taus, energies = [], []
    with open(args.trajectory) as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].strip().lower() in ("tau", "t", "#"):
                continue
            taus.append(float(row[0]))
            energies.append(float(row[1]))
    traj = build_trajectory(np.array(taus), np.array(energies))
    fit = haff_fit(traj, args.gamma)
    inputs = {"command": "haff-fit", "trajectory": os.path.abspath(args.trajectory),
              "gamma": args.gamma}
    passed = bool(abs(fit["exponent"] - fit["exponent_theory"]) <= args.tolerance
                  and fit["bracket_violations"] == 0)
    report = {"inputs": inputs, "manifest": manifest_stub(inputs, 0), **fit,
              "tolerance": args.tolerance, "pass": passed}
    _write_report(report, args.out)
    return EXIT_OK if passed else EXIT_NUMERIC


def cmd_entropy_report(args) -> int:
    spec = parse_config(args.config, args.seed, None)
    if spec.solver.mode == "original":
        raise InputError("entropy-report needs a rescaled-mode configuration")
    spec.diagnostics.entropy = True
    spec.diagnostics.d1 = True
    result = _run_simulation(spec)
    rows = [r for r in result.records if r.xi is not None]
    report = {
        "inputs": {"command": "entropy-report", "config": os.path.abspath(args.config),
                   "seed": spec.master_seed},
        "manifest": manifest_stub(spec.canonical(), spec.master_seed),
        "rows": [{"t": r.t, "H": r.entropy, "H_raw": r.entropy_raw,
                  "H_se": r.entropy_se, "D1": r.d1, "D1_se": r.d1_se,
                  "xi": r.xi, "z": r.z} for r in result.records],
    }
    if spec.record_mode == "linear" and len(rows) >= 5:
        balance = entropy_balance_check(
            np.array([r.t for r in rows]),
            np.array([r.entropy_raw for r in rows]),
            np.array([r.d1 for r in rows]),
            np.array([r.xi for r in rows]))
        report["balance"] = {k: balance[k] for k in
                             ("c_fit", "bounded", "shape_max", "shape_median")}
    _write_report(report, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gk",
        description="granular-gas kinetics: DSMC runs and operator certificates")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a configured simulation")
    sim.add_argument("--config", required=True)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", default=None)
    sim.add_argument("--threads", type=int, default=None)
    sim.add_argument("--format", choices=("jsonl", "csv"), default=None)
    sim.set_defaults(func=cmd_simulate)

    def model_flags(p):
        p.add_argument("--kind", choices=("elastic", "constant", "viscoelastic"),
                       default="viscoelastic")
        p.add_argument("--e0", type=float, default=0.8)
        p.add_argument("--a", type=float, default=0.2)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=None)

    spread = sub.add_parser("spreading-check",
                            help="support radius and positivity floor of the gain term")
    model_flags(spread)
    spread.add_argument("--delta", type=float, default=1.0)
    spread.add_argument("--chi", type=float, default=0.5)
    spread.add_argument("--samples", type=int, default=1_000_000)
    spread.set_defaults(func=cmd_spreading_check)

    rate = sub.add_parser("rate-fit",
                          help="slope of the scaled-vs-elastic gain difference")
    model_flags(rate)
    rate.add_argument("--lambdas", default="0.5,0.25,0.125,0.0625")
    rate.add_argument("--weight-order", type=float, default=None)
    rate.add_argument("--samples", type=int, default=400_000)
    rate.add_argument("--theta", type=float, default=1.0)
    rate.add_argument("--slope-tolerance", type=float, default=0.1)
    rate.set_defaults(func=cmd_rate_fit)

    haff = sub.add_parser("haff-fit", help="cooling-law fit of a trajectory CSV")
    haff.add_argument("--trajectory", required=True)
    haff.add_argument("--gamma", type=float, required=True)
    haff.add_argument("--tolerance", type=float, default=0.1)
    haff.add_argument("--out", default=None)
    haff.set_defaults(func=cmd_haff_fit)

    ent = sub.add_parser("entropy-report",
                         help="entropy/dissipation rows and balance screening")
    ent.add_argument("--config", required=True)
    ent.add_argument("--seed", type=int, default=None)
    ent.add_argument("--out", default=None)
    ent.add_argument("--threads", type=int, default=None)
    ent.set_defaults(func=cmd_entropy_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, UnsupportedKernelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, TimestepError, InstabilityError, SelfConsistencyError,
            InsufficientSamplesError, NonUniformGridError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
