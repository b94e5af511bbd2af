"""Configuration-driven command line interface.

    macrohydro steady|linop|covariance|simulate|verify --config scenario.json
               [--out DIR] [--seed U64] [--paths K] [--mutate NAME]

A scenario config is strict JSON (unknown keys are rejected) describing the
model, mesh, boundary data and, for the simulate task, the ensemble
settings. Tasks execute in dependency order; every output except
manifest.json (which carries the timestamps) is byte-reproducible for a
fixed config and tool version. Exit codes: 0 success, 1 runtime error,
2 verification failure, 64 config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys as _sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .covariance import compute_report, noise_covariance
from .errors import ConfigError, InsufficientSamples, MacrohydroError
from .grid import BoundaryData, Mesh1D
from .linop import assemble
from .spde import (
    SimConfig,
    autocorrelation,
    ensemble_mean_check,
    gaussian_markov_tests,
    increment_tests,
    simulate,
    stationary_covariance,
)
from .stats import effective_sample_size
from .steady import solve_steady, steady_current
from .thermo import make_model
from .verify import run_battery, write_matrix_csv

FORMAT_VERSION = 1
TASK_ORDER = ["steady", "linop", "covariance", "simulate", "verify"]
TASK_DEPS = {
    "steady": [],
    "linop": ["steady"],
    "covariance": ["steady", "linop"],
    "simulate": ["steady", "linop", "covariance"],
    "verify": [],
}


# ---------------------------------------------------------------------------
# Config schema (hand-rolled so errors can name the offending key)
# ---------------------------------------------------------------------------

def _reject_unknown(obj: dict, allowed: set, where: str):
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")

    _reject_unknown(cfg, {"format_version", "model", "mesh", "bc", "tasks", "sim", "output_dir"},
                    "config root")
    for req in ("format_version", "model", "mesh", "bc"):
        if req not in cfg:
            raise ConfigError(f"missing required key {req!r}")
    if cfg["format_version"] != FORMAT_VERSION:
        raise ConfigError(
            f"format_version {cfg['format_version']!r} unsupported (tool supports {FORMAT_VERSION})"
        )

    model = cfg["model"]
    if not isinstance(model, dict):
        raise ConfigError("'model' must be an object")
    _reject_unknown(model, {"name", "params"}, "'model'")
    if not isinstance(model.get("name"), str):
        raise ConfigError("'model.name' must be a string")

    mesh = cfg["mesh"]
    if not isinstance(mesh, dict):
        raise ConfigError("'mesh' must be an object")
    _reject_unknown(mesh, {"n"}, "'mesh'")
    if not isinstance(mesh.get("n"), int) or mesh["n"] < 2:
        raise ConfigError("'mesh.n' must be an integer >= 2")

    bc = cfg["bc"]
    if not isinstance(bc, dict):
        raise ConfigError("'bc' must be an object")
    _reject_unknown(bc, {"kind", "left", "right"}, "'bc'")
    if bc.get("kind", "q") not in ("q", "theta"):
        raise ConfigError("'bc.kind' must be 'q' or 'theta'")
    for side in ("left", "right"):
        val = bc.get(side)
        if not isinstance(val, list) or not all(isinstance(v, (int, float)) for v in val):
            raise ConfigError(f"'bc.{side}' must be a list of numbers")

    tasks = cfg.get("tasks", [])
    if not isinstance(tasks, list) or not all(isinstance(t, str) for t in tasks):
        raise ConfigError("'tasks' must be a list of task names")
    for t in tasks:
        if t not in TASK_ORDER:
            raise ConfigError(f"unknown task {t!r} (choose from {TASK_ORDER})")

    sim = cfg.get("sim")
    if sim is not None:
        if not isinstance(sim, dict):
            raise ConfigError("'sim' must be an object")
        _reject_unknown(sim, {"dt", "steps", "burn_in", "n_paths", "seed",
                              "record_stride", "record_increments"}, "'sim'")
        for req in ("n_paths", "seed"):
            if not isinstance(sim.get(req), int) or sim[req] < 0:
                raise ConfigError(f"'sim.{req}' must be a nonnegative integer")
        for opt, typ in (("steps", int), ("burn_in", int), ("record_stride", int)):
            if opt in sim and (not isinstance(sim[opt], typ) or sim[opt] < 0):
                raise ConfigError(f"'sim.{opt}' must be a nonnegative integer")
        if "dt" in sim and sim["dt"] is not None and not isinstance(sim["dt"], (int, float)):
            raise ConfigError("'sim.dt' must be a number or null")
        if "record_increments" in sim and not isinstance(sim["record_increments"], bool):
            raise ConfigError("'sim.record_increments' must be a boolean")

    if "output_dir" in cfg and not isinstance(cfg["output_dir"], str):
        raise ConfigError("'output_dir' must be a string")
    return cfg


# ---------------------------------------------------------------------------
# Output writers (17 significant digits, CRLF per RFC 4180)
# ---------------------------------------------------------------------------

def _write_table(path, header: list[str], rows: np.ndarray):
    rows = np.atleast_2d(rows)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\r\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\r\n")


def _workers() -> int:
    env = os.environ.get("MACROHYDRO_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return os.cpu_count() or 1


def _auto_sim_config(sim: dict, model, profile, sys) -> SimConfig:
    h = profile.mesh.h
    kmax = max(float(np.linalg.norm(np.asarray(model.mobility(row)), 2)) for row in profile.q)
    bound = 0.4 * h * h / (2.0 * kmax)
    relax = 1.0 / abs(sys.spectral_abscissa)
    dt = sim.get("dt") or bound / 12.0
    stride = sim.get("record_stride") or int(np.ceil(0.5 * relax / dt))
    return SimConfig(
        dt=float(dt),
        steps=sim.get("steps", 16 * stride),
        burn_in=sim.get("burn_in", int(np.ceil(10 * relax / dt))),
        n_paths=sim["n_paths"],
        seed=sim["seed"],
        record_stride=stride,
        record_increments=sim.get("record_increments", False),
    )


def run(config_path: str, target: str, out_dir: str | None = None,
        seed: int | None = None, paths: int | None = None,
        mutate: str | None = None) -> int:
    """Execute ``target`` plus its dependencies; returns the process exit code."""
    t_start = time.time()
    cfg = load_config(config_path)
    out = out_dir or cfg.get("output_dir", "out")
    os.makedirs(out, exist_ok=True)

    wanted = set(cfg.get("tasks", [])) | {target}
    needed = set()
    for t in wanted:
        needed.add(t)
        needed.update(TASK_DEPS[t])
    tasks = [t for t in TASK_ORDER if t in needed]

    outputs = []
    exit_code = 0
    model = make_model(cfg["model"]["name"], cfg["model"].get("params"))
    mesh = Mesh1D(cfg["mesh"]["n"])
    bc = BoundaryData(cfg["bc"]["left"], cfg["bc"]["right"], cfg["bc"].get("kind", "q"))
    profile = sys_ = noise = C = None
    eff_seed = None

    for task in tasks:
        if task == "steady":
            profile = solve_steady(model, mesh, bc)
            x = mesh.centers
            currents = steady_current(model, profile)
            j_centers = 0.5 * (currents[:-1] + currents[1:])
            m = model.m
            header = (["x"] + [f"q_{k+1}" for k in range(m)]
                      + [f"theta_{k+1}" for k in range(m)] + [f"j_{k+1}" for k in range(m)])
            table = np.column_stack([x, profile.q, profile.theta, j_centers])
            _write_table(os.path.join(out, "profile.csv"), header, table)
            with open(os.path.join(out, "profile_meta.json"), "w") as fh:
                json.dump({"residual_norm": profile.residual_norm,
                           "newton_iterations": profile.iterations,
                           "n": mesh.n, "m": m}, fh, indent=2)
            outputs += ["profile.csv", "profile_meta.json"]
        elif task == "linop":
            sys_ = assemble(model, profile)
            write_matrix_csv(os.path.join(out, "L.csv"), sys_.L)
            eig = np.linalg.eigvals(sys_.L)
            order = np.argsort(-eig.real)
            with open(os.path.join(out, "spectrum.json"), "w") as fh:
                json.dump({"spectral_abscissa": sys_.spectral_abscissa,
                           "eigenvalues_real": eig.real[order].tolist(),
                           "eigenvalues_imag": eig.imag[order].tolist()}, fh, indent=2)
            outputs += ["L.csv", "spectrum.json"]
        elif task == "covariance":
            report = compute_report(model, profile, sys_)
            noise = noise_covariance(model, profile)
            C = report.C
            write_matrix_csv(os.path.join(out, "C.csv"), report.C)
            write_matrix_csv(os.path.join(out, "B.csv"), report.B)
            m = model.m
            phi_cols = [f"phi_{k+1}{l+1}" for k in range(m) for l in range(m)]
            _write_table(os.path.join(out, "phi.csv"), ["x"] + phi_cols,
                         np.column_stack([mesh.centers, report.phi.reshape(mesh.n, m * m)]))
            with open(os.path.join(out, "report.json"), "w") as fh:
                json.dump({
                    "long_range": report.long_range,
                    "onsager_defect": report.onsager_defect,
                    "fd_relative_residual": report.fd_relative_residual,
                    "spectral_abscissa": report.spectral_abscissa,
                    "grid": {"n": mesh.n, "m": m, "h": mesh.h},
                    "phi_max_interior": float(np.max(np.abs(report.phi[2:-2]))),
                    "psi_asym_max": float(np.max(np.abs(report.psi_asym[2:-2]))),
                }, fh, indent=2)
            outputs += ["C.csv", "B.csv", "phi.csv", "report.json"]
        elif task == "simulate":
            if cfg.get("sim") is None:
                raise ConfigError("simulate task requires a 'sim' section")
            sim = dict(cfg["sim"])
            if seed is not None:
                sim["seed"] = seed
            if paths is not None:
                sim["n_paths"] = paths
            sim_cfg = _auto_sim_config(sim, model, profile, sys_)
            eff_seed = sim_cfg.seed
            ens = simulate(model, sys_, noise, sim_cfg, workers=_workers())
            C_hat, SE = stationary_covariance(ens)
            write_matrix_csv(os.path.join(out, "ensemble_cov.csv"), C_hat)

            N = C_hat.shape[0]
            hat = np.zeros(N); hat[N // 2] = 1.0
            xg = (np.arange(N) + 0.5) / N
            funcs = [("hat_mid", hat), ("sine_1", np.sin(np.pi * xg)), ("sine_2", np.sin(2 * np.pi * xg))]
            S = ens.states.shape[0]
            lags = [j * ens.snapshot_spacing for j in range(0, min(S, 9))]
            acf = autocorrelation(ens, lags)
            rows = [[lag] + [float(v @ acf[lag][0] @ v) for _, v in funcs] for lag in lags]
            _write_table(os.path.join(out, "autocorr.csv"),
                         ["lag"] + [name for name, _ in funcs], np.array(rows))

            rel = float(np.linalg.norm(C_hat - C) / np.linalg.norm(C))
            frac = float(np.mean(np.abs(C_hat - C) <= 4.0 * SE))

            def _maybe(fn):
                try:
                    return fn()
                except InsufficientSamples as exc:
                    return {"skipped": str(exc)}

            tests = {
                "mean_check": ensemble_mean_check(ens),
                "covariance_vs_lyapunov": {"rel_frobenius": rel, "frac_within_4se": frac},
                "effective_samples_midpoint": effective_sample_size(ens.states[:, :, N // 2]),
                "gaussian_markov": _maybe(lambda: gaussian_markov_tests(ens)),
                "increments": (_maybe(lambda: increment_tests(ens, noise, sys_))
                               if sim_cfg.record_increments else None),
                "rng": ens.rng,
                "config": asdict(sim_cfg),
            }
            with open(os.path.join(out, "tests.json"), "w") as fh:
                json.dump(tests, fh, indent=2)
            outputs += ["ensemble_cov.csv", "autocorr.csv", "tests.json"]
        elif task == "verify":
            factor = 1.0 if paths is None else paths / 2000.0
            transform = (lambda g: -g) if mutate == "gamma_sign" else None
            results = run_battery(paths_factor=factor, workers=_workers(),
                                  out_dir=out, gamma_transform=transform)
            with open(os.path.join(out, "verify_report.json"), "w") as fh:
                json.dump([{"number": r.number, "name": r.name, "status": r.status,
                            "seconds": r.seconds, "details": r.details} for r in results],
                          fh, indent=2, default=float)
            outputs.append("verify_report.json")
            if any(r.status == "FAIL" for r in results):
                exit_code = 2

    manifest = {
        "tool": "macrohydro",
        "version": __version__,
        "config_sha256": hashlib.sha256(open(config_path, "rb").read()).hexdigest(),
        "tasks": tasks,
        "seed": eff_seed,
        "outputs": sorted(set(outputs)),
        "wall_clock_seconds": time.time() - t_start,
        "timestamp_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    return exit_code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="macrohydro",
        description="Steady states, fluctuations and long-range correlations "
                    "of reservoir-driven nonlinear diffusions.",
    )
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASK_ORDER:
        p = sub.add_parser(task, help=f"run the {task} task (and its prerequisites)")
        p.add_argument("--config", required=(task != "verify"),
                       help="path to a scenario JSON config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the ensemble seed")
        p.add_argument("--paths", type=int, default=None,
                       help="override the path count (verify: 2000 = nominal)")
        if task == "verify":
            p.add_argument("--mutate", choices=["gamma_sign"], default=None,
                           help="mutation-test mode: inject a sign error to prove "
                                "the battery catches it")
    args = parser.parse_args(argv)

    try:
        if args.task == "verify" and args.config is None:
            factor = 1.0 if args.paths is None else args.paths / 2000.0
            transform = (lambda g: -g) if getattr(args, "mutate", None) == "gamma_sign" else None
            out = args.out or "out"
            os.makedirs(out, exist_ok=True)
            results = run_battery(paths_factor=factor, workers=_workers(),
                                  out_dir=out, gamma_transform=transform)
            with open(os.path.join(out, "verify_report.json"), "w") as fh:
                json.dump([{"number": r.number, "name": r.name, "status": r.status,
                            "seconds": r.seconds, "details": r.details} for r in results],
                          fh, indent=2, default=float)
            return 2 if any(r.status == "FAIL" for r in results) else 0
        return run(args.config, args.task, out_dir=args.out, seed=args.seed,
                   paths=args.paths, mutate=getattr(args, "mutate", None))
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 64
    except MacrohydroError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=_sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    _sys.exit(main())
