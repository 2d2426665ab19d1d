"""Command-line experiment harness.

Subcommands ``run``, ``sweep-gamma``, ``sweep-layer``, ``verify`` and
``mesh-info``.  Configuration is a flat ``key=value`` file with ``#``
comments and dotted keys (``layer.B=2.5e-5``); ``--set KEY=VALUE`` and the
dedicated flags override file keys.

Exit codes: 0 success, 1 configuration error, 2 verification failure,
3 solver did not converge (``run --strict`` only).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from .contact import contact_pressure
from .dd_solver import ddm_solve, monolithic_newton
from .model import ModelError, power_law
from .scenario import ConfigError, ScenarioConfig, generate_scenario
from .system import discretize

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFY = 2
EXIT_DIVERGED = 3

WORKERS_ENV = "WINKLER_WORKERS"

# dotted key -> ScenarioConfig field
KEY_ALIASES = {
    "geometry.l": "l",
    "geometry.h": "h",
    "mesh.nx": "nx",
    "mesh.ny": "ny",
    "material.E": "E",
    "material.nu": "nu",
    "load.q": "q",
    "layer.B": "B",
    "layer.a": "a",
    "gap.r": "r",
    "gap.b": "b",
    "solver.gamma": "gamma",
    "solver.strategy": "strategy",
    "solver.eps_u": "eps_u",
    "solver.max_iterations": "max_iterations",
    "solver.initial_trace": "initial_trace",
    "solver.divergence_guard": "divergence_guard",
    "run.seed": "seed",
    "output.dir": "output_dir",
}

NEAR_RIGID = (1e-8, 1.0)

CONVERGENCE_COLUMNS = ("k", "rho_1", "rho_2", "energy_F1", "active_nodes", "gamma")
PRESSURE_COLUMNS = ("x1_cm", "sigma_n_MPa", "gap_cm", "t_cm")
GAMMA_SWEEP_COLUMNS = ("gamma", "outcome", "iterations")
LAYER_SWEEP_COLUMNS = ("B", "a", "outcome", "iterations", "max_abs_sigma_MPa",
                       "peak_deviation_vs_reference")


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def _field_types() -> dict:
    defaults = ScenarioConfig()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(ScenarioConfig)}


def _convert(name: str, text: str, kind):
    text = text.strip()
    if kind is tuple:
        return tuple(float(x) for x in text.split(",") if x.strip())
    if kind is int:
        value = float(text)
        if value != int(value):
            raise ValueError(f"not an integer: {text!r}")
        return int(value)
    if kind is float:
        return float(text)
    return text


def parse_assignments(lines, source: str = "<config>"):
    """Parse ``key=value`` lines into ScenarioConfig field values.

    Returns ``(values, errors)``; every malformed line is reported.
    """
    types = _field_types()
    values, errors = {}, []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
            continue
        key, text = (s.strip() for s in line.split("=", 1))
        name = KEY_ALIASES.get(key, key)
        if name not in types:
            errors.append(f"{source}:{lineno}: unknown key {key!r}")
            continue
        try:
            values[name] = _convert(name, text, types[name])
        except ValueError as exc:
            errors.append(f"{source}:{lineno}: bad value for {key}: {exc}")
    return values, errors


def load_config(path=None, overrides=(), **explicit) -> ScenarioConfig:
    """Build and validate a config from a file, ``KEY=VALUE`` overrides and
    explicit field values (later sources win).  Raises ConfigError listing
    every problem."""
    values, errors = {}, []
    if path is not None:
        try:
            text = Path(path).read_text().splitlines()
        except OSError as exc:
            raise ConfigError([f"cannot read config file {path}: {exc.strerror}"]) from exc
        v, e = parse_assignments(text, str(path))
        values.update(v)
        errors += e
    v, e = parse_assignments(overrides, "--set")
    values.update(v)
    errors += e
    values.update({k: val for k, val in explicit.items() if val is not None})
    cfg = ScenarioConfig(**values)
    try:
        cfg.validate()
    except ConfigError as exc:
        errors += exc.errors
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_gammas(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError([f"bad gamma list {text!r}: {exc}"]) from exc


def parse_layers(text: str) -> list:
    """``"1e-5:0.3,1e-5:1"`` -> [(1e-5, 0.3), (1e-5, 1.0)]."""
    out, errors = [], []
    for item in (s.strip() for s in text.split(",")):
        if not item:
            continue
        try:
            B, a = item.split(":")
            out.append((float(B), float(a)))
        except ValueError:
            errors.append(f"bad layer entry {item!r}; expected B:a")
    if errors:
        raise ConfigError(errors)
    return out


def worker_count(flag=None) -> int:
    if flag is not None:
        return max(1, int(flag))
    env = os.environ.get(WORKERS_ENV, "").strip()
    if not env:
        return 1
    try:
        return max(1, int(env))
    except ValueError as exc:
        raise ConfigError([f"{WORKERS_ENV} must be an integer (got {env!r})"]) from exc


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, columns, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def convergence_rows(report, n_bodies: int = 2):
    for r in report.records:
        rho = list(r.rho) + [float("nan")] * (n_bodies - len(r.rho))
        yield (r.k, *rho[:n_bodies], r.energy, r.active, r.gamma)


def pressure_rows(disc, fields_):
    for p in disc.pairs:
        ua, ub = fields_[p.alpha], fields_[p.beta]
        t = p.gap_argument(ua, ub)
        sigma = contact_pressure(p, ua, ub)
        for x, s, d, tt in zip(p.coords, sigma, p.gap, t):
            yield (x, s + 0.0, d, tt)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _solve(cfg: ScenarioConfig, method: str = "ddm"):
    disc = discretize(generate_scenario(cfg))
    solver = monolithic_newton if method == "newton" else ddm_solve
    state, report = solver(disc, cfg.solver_config())
    return disc, state, report


def cmd_run(cfg: ScenarioConfig, out: Path, method: str = "ddm") -> dict:
    """Solve the scenario and write convergence, pressure and summary files."""
    t0 = time.perf_counter()
    disc, state, report = _solve(cfg, method)
    seconds = time.perf_counter() - t0
    out = Path(out)
    write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS, convergence_rows(report))
    write_csv(out / "pressure.csv", PRESSURE_COLUMNS, pressure_rows(disc, state.fields))
    summary = dict(outcome=report.outcome, iterations=report.iterations,
                   seconds=seconds, message=report.message, method=method)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _gamma_job(args):
    cfg, gamma = args
    try:
        _, _, report = _solve(cfg.with_(gamma=(gamma,)))
        return gamma, report.outcome, report.iterations
    except (ModelError, ValueError, ArithmeticError) as exc:
        return gamma, f"error: {exc}", 0


def _map(func, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [func(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(func, jobs))


def cmd_sweep_gamma(cfg: ScenarioConfig, gammas, out: Path, workers: int = 1) -> list:
    if not gammas:
        raise ConfigError(["gamma list is empty"])
    bad = [g for g in gammas if not 0.0 < g < 2.0]
    if bad:
        raise ConfigError([f"gamma must lie in (0, 2) (got {g})" for g in bad])
    rows = _map(_gamma_job, [(cfg, g) for g in gammas], workers)
    write_csv(Path(out) / "gamma_sweep.csv", GAMMA_SWEEP_COLUMNS, rows)
    return rows


def _layer_job(args):
    cfg, (B, a), method = args
    try:
        disc, state, report = _solve(cfg.with_(B=B, a=a), method)
        return (B, a), report.outcome, report.iterations, list(pressure_rows(disc, state.fields))
    except (ModelError, ValueError, ArithmeticError) as exc:
        return (B, a), f"error: {exc}", 0, []


def layer_file_name(B: float, a: float) -> str:
    return f"pressure_B{B:g}_a{a:g}.csv"


def peak_pressure(rows) -> float:
    return max((abs(r[1]) for r in rows), default=float("nan"))


def cmd_sweep_layer(cfg: ScenarioConfig, layers, out: Path, workers: int = 1,
                    method: str = "ddm") -> list:
    """One pressure profile per (B, a) plus a comparison table against the
    near-rigid reference layer, which is always solved by Newton."""
    out = Path(out)
    if not layers:
        return []
    errors = [f"layer ({B}, {a}): B must be > 0 and a in (0, 1]"
              for B, a in layers if not (B > 0 and 0 < a <= 1)]
    if errors:
        raise ConfigError(errors)
    jobs = [(cfg, NEAR_RIGID, "newton")] + [(cfg, la, method) for la in layers]
    results = _map(_layer_job, jobs, workers)
    ref = results[0]
    write_csv(out / "reference_pressure.csv", PRESSURE_COLUMNS, ref[3])
    ref_peak = peak_pressure(ref[3])
    table = []
    for (B, a), outcome, iters, rows in results[1:]:
        write_csv(out / layer_file_name(B, a), PRESSURE_COLUMNS, rows)
        peak = peak_pressure(rows)
        table.append((B, a, outcome, iters, peak, abs(peak - ref_peak) / ref_peak))
    write_csv(out / "layer_sweep.csv", LAYER_SWEEP_COLUMNS, table)
    return table


def cmd_verify(cfg: ScenarioConfig, seed: int = 0) -> list:
    from .verify import run_all

    return run_all(cfg, seed=seed)


def mesh_info(cfg: ScenarioConfig) -> dict:
    disc = discretize(generate_scenario(cfg))
    bodies = []
    for k, body in enumerate(disc.problem.bodies):
        bodies.append(dict(body=k + 1, nodes=body.mesh.n_nodes, elements=body.mesh.n_elements,
                           free_dofs=int(disc.dofmaps[k].free.size)))
    pairs = [dict(name=p.name, bodies=(p.alpha + 1, p.beta + 1), nodes=p.n_nodes)
             for p in disc.pairs]
    return dict(bodies=bodies, pairs=pairs)


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="winkler", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="key=value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    common.add_argument("--seed", type=int, help="seed for randomized checks")
    common.add_argument("--out", "-o", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="solve the scenario once")
    p.add_argument("--strict", action="store_true",
                   help="exit 3 when the solver does not converge")
    p.add_argument("--method", choices=("ddm", "newton"), default="ddm")

    p = sub.add_parser("sweep-gamma", parents=[common], help="iteration counts over gamma")
    p.add_argument("--gammas", required=True, help="comma-separated list")
    p.add_argument("--workers", type=int, help=f"parallel runs (default ${WORKERS_ENV} or 1)")

    p = sub.add_parser("sweep-layer", parents=[common], help="pressure profiles over (B, a)")
    p.add_argument("--layers", default="", help="comma-separated B:a entries")
    p.add_argument("--workers", type=int, help=f"parallel runs (default ${WORKERS_ENV} or 1)")
    p.add_argument("--method", choices=("ddm", "newton"), default="ddm")

    p = sub.add_parser("verify", parents=[common], help="run the property checks")
    p.add_argument("--nx", type=int, default=8, help="cells per body along x (default 8)")
    p.add_argument("--ny", type=int, default=4, help="cells per body along y (default 4)")

    sub.add_parser("mesh-info", parents=[common], help="print mesh and pairing sizes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        explicit = dict(seed=args.seed, output_dir=args.out)
        if args.command == "verify":
            explicit.update(nx=args.nx, ny=args.ny)
        cfg = load_config(args.config, args.set, **explicit)
        out = Path(cfg.output_dir)

        if args.command == "run":
            summary = cmd_run(cfg, out, args.method)
            print(f"outcome={summary['outcome']} iterations={summary['iterations']} "
                  f"seconds={summary['seconds']:.3f}")
            if summary["message"]:
                print(summary["message"])
            if args.strict and summary["outcome"] != "converged":
                return EXIT_DIVERGED
            return EXIT_OK

        if args.command == "sweep-gamma":
            rows = cmd_sweep_gamma(cfg, parse_gammas(args.gammas), out, worker_count(args.workers))
            for g, outcome, iters in rows:
                print(f"gamma={g:g} outcome={outcome} iterations={iters}")
            return EXIT_OK

        if args.command == "sweep-layer":
            table = cmd_sweep_layer(cfg, parse_layers(args.layers), out,
                                    worker_count(args.workers), args.method)
            for B, a, outcome, iters, peak, dev in table:
                print(f"B={B:g} a={a:g} outcome={outcome} iterations={iters} "
                      f"max|sigma_n|={peak:.6g} MPa deviation={dev:.3%}")
            return EXIT_OK

        if args.command == "verify":
            results = cmd_verify(cfg, cfg.seed)
            for r in results:
                print(r.line())
            failed = [r for r in results if r.applicable and not r.passed]
            print(f"{len(results) - len(failed)}/{len(results)} checks passed")
            return EXIT_VERIFY if failed else EXIT_OK

        info = mesh_info(cfg)
        for b in info["bodies"]:
            print(f"body {b['body']}: {b['nodes']} nodes, {b['elements']} elements, "
                  f"{b['free_dofs']} free dofs")
        for p in info["pairs"]:
            print(f"pair {p['name']} (bodies {p['bodies'][0]}-{p['bodies'][1]}): "
                  f"{p['nodes']} paired nodes")
        return EXIT_OK
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
