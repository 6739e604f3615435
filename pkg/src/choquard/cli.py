"""Command-line front end: configuration, dispatch, and persistence.

Configuration comes from an optional JSON file plus flags (flags win).
The schema is strict: unknown keys and duplicate keys are rejected, and
every numeric range is validated at parse time with the violated
constraint named in the error.  Exit codes: 0 success, 1 experiment
verdict failed, 2 configuration or runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field as dataclass_field, asdict

from .grid import make_grid
from .potentials import PotentialSpec


class ConfigError(ValueError):
    """Invalid configuration with the failing key and constraint."""


COMMANDS = (
    "groundstate", "psi1", "spectrum", "evolve",
    "instability", "stability", "limits",
)

_DEFAULTS = {
    "grid_n": 64,
    "box_l": 8.0,
    "mu": 1.0,
    "p": 2.5,
    "omega": 1.0,
    "tol": 1e-8,
    "max_iter": 20000,
    "dt": 1e-3,
    "t_final": 1.0,
    "lambda": 1.2,
    "epsilon": 1e-2,
    "seeds": 10,
    "seed": 0,
    "eig_count": 6,
    "observer_stride": 10,
    "snapshot_stride": 0,
    "omega_list": [10.0, 100.0, 1000.0],
    "potential": {"kind": "zero"},
    "initial_field": "",
    "out": ".",
}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    grid_n: int
    box_l: float
    mu: float
    p: float
    omega: float
    tol: float
    max_iter: int
    dt: float
    t_final: float
    dilation: float
    epsilon: float
    seeds: int
    seed: int
    eig_count: int
    observer_stride: int
    snapshot_stride: int
    omega_list: tuple
    potential: dict
    initial_field: str
    out: str

    def as_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("dilation")
        d["omega_list"] = list(d["omega_list"])
        return d

    def potential_spec(self) -> PotentialSpec:
        return _potential_spec(self.potential)


def _potential_spec(pd: dict) -> PotentialSpec:
    kind = pd.get("kind", "zero")
    extra = {k: v for k, v in pd.items()
             if k not in ("kind", "a", "coeffs", "v2_radii", "v2_values", "q")}
    if extra:
        raise ConfigError(f"unknown potential keys {sorted(extra)}")
    if kind == "zero":
        spec = PotentialSpec.zero()
    elif kind == "harmonic":
        spec = PotentialSpec.harmonic(float(pd.get("a", 1.0)))
    elif kind == "radial_polynomial":
        spec = PotentialSpec.radial_polynomial(pd.get("coeffs", (1.0,)))
    else:
        raise ConfigError(f"potential.kind must be zero|harmonic|radial_polynomial, got {kind!r}")
    if "v2_radii" in pd or "v2_values" in pd:
        spec = spec.with_table(
            pd.get("v2_radii", ()), pd.get("v2_values", ()),
            q=float(pd.get("q", 2.0)),
        )
    return spec


def _no_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ConfigError(
                f"duplicate key {k!r} (first and repeated occurrence in the same object)"
            )
        seen[k] = v
    return seen


def _check(cond, key, constraint):
    if not cond:
        raise ConfigError(f"config key {key!r} violates constraint: {constraint}")


def parse_config(file_path: str | None = None,
                 overrides: dict | None = None) -> ExperimentConfig:
    """Merge defaults, an optional JSON file, and flag overrides; validate."""
    merged = dict(_DEFAULTS)
    merged["command"] = None
    if file_path:
        with open(file_path) as fh:
            try:
                loaded = json.load(fh, object_pairs_hook=_no_duplicates)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{file_path}: invalid JSON ({exc})") from exc
        unknown = set(loaded) - set(merged)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        merged.update(loaded)
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in merged:
            raise ConfigError(f"unknown config key {k!r}")
        merged[k] = v

    cmd = merged["command"]
    _check(cmd in COMMANDS, "command", f"one of {COMMANDS}")
    n = merged["grid_n"]
    _check(isinstance(n, int) and n >= 8 and (n & (n - 1)) == 0,
           "grid_n", "power of two >= 8")
    _check(merged["box_l"] > 0, "box_l", "box_l > 0")
    mu = float(merged["mu"])
    _check(0.0 < mu < 3.0, "mu", "0 < mu < 3")
    p = float(merged["p"])
    _check(p > 2.0 - mu / 3.0, "p", "p > 2 - mu/3")
    _check(merged["omega"] > 0, "omega", "omega > 0")
    _check(merged["tol"] > 0, "tol", "tol > 0")
    _check(merged["max_iter"] >= 1, "max_iter", "max_iter >= 1")
    _check(merged["dt"] > 0, "dt", "dt > 0")
    _check(merged["t_final"] > 0, "t_final", "t_final > 0")
    _check(merged["lambda"] > 0, "lambda", "lambda > 0")
    _check(merged["epsilon"] >= 0, "epsilon", "epsilon >= 0")
    _check(merged["seeds"] >= 1, "seeds", "seeds >= 1")
    _check(merged["eig_count"] >= 1, "eig_count", "1 <= eig_count <= 16")
    _check(merged["eig_count"] <= 16, "eig_count", "1 <= eig_count <= 16")
    _check(merged["observer_stride"] >= 1, "observer_stride", ">= 1")
    oms = list(merged["omega_list"])
    _check(all(w > 0 for w in oms), "omega_list", "all omegas > 0")
    _check(all(b > a for a, b in zip(oms, oms[1:])), "omega_list",
           "strictly increasing")
    if not isinstance(merged["potential"], dict):
        raise ConfigError("config key 'potential' must be an object")
    _potential_spec(merged["potential"])  # validates now

    return ExperimentConfig(
        command=cmd,
        grid_n=int(n),
        box_l=float(merged["box_l"]),
        mu=mu,
        p=p,
        omega=float(merged["omega"]),
        tol=float(merged["tol"]),
        max_iter=int(merged["max_iter"]),
        dt=float(merged["dt"]),
        t_final=float(merged["t_final"]),
        dilation=float(merged["lambda"]),
        epsilon=float(merged["epsilon"]),
        seeds=int(merged["seeds"]),
        seed=int(merged["seed"]),
        eig_count=int(merged["eig_count"]),
        observer_stride=int(merged["observer_stride"]),
        snapshot_stride=int(merged["snapshot_stride"]),
        omega_list=tuple(float(w) for w in oms),
        potential=dict(merged["potential"]),
        initial_field=str(merged["initial_field"]),
        out=str(merged["out"]),
    )


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def run_command(config: ExperimentConfig) -> int:
    from . import dynamics, io, spectrum, stability
    from .ground_state import solve_ground_state, solve_psi1
    from .grid import riesz_convolve  # noqa: F401  (re-export sanity)

    os.makedirs(config.out, exist_ok=True)
    grid = make_grid(config.grid_n, config.box_l)
    spec = config.potential_spec()
    cfg = config.as_dict()

    def out(name):
        return os.path.join(config.out, name)

    if config.command == "psi1":
        res = solve_psi1(config.mu, config.p, grid,
                         tol=config.tol, max_iter=config.max_iter)
        io.write_field(out("psi1.fld"), res.phi)
        io.write_report(res.as_dict(), out("report.json"), cfg)
        return 0 if res.converged else 1

    if config.command == "groundstate":
        res = solve_ground_state(spec, config.omega, config.mu, config.p,
                                 grid, tol=config.tol,
                                 max_iter=config.max_iter)
        io.write_field(out("groundstate.fld"), res.phi)
        io.write_report(res.as_dict(), out("report.json"), cfg)
        return 0 if res.converged else 1

    if config.command == "spectrum":
        res = solve_ground_state(spec, config.omega, config.mu, config.p,
                                 grid, tol=config.tol,
                                 max_iter=config.max_iter)
        zero_pot = spec.is_zero() and config.omega == 1.0
        tags = ("L1", "L2") if zero_pot else ("L1_omega", "L2_omega")
        reports = {}
        for tag in tags:
            rep = spectrum.lowest_eigenpairs(
                tag, res.phi, res.potential, config.omega, config.mu,
                config.p, config.eig_count, seed=config.seed)
            reports[tag] = rep.as_dict()
        io.write_report({"state": res.as_dict(), "spectra": reports},
                        out("report.json"), cfg)
        return 0 if res.converged else 1

    if config.command == "evolve":
        if config.initial_field:
            u0 = io.read_field(config.initial_field, grid)
        else:
            u0 = solve_ground_state(spec, config.omega, config.mu, config.p,
                                    grid, tol=config.tol,
                                    max_iter=config.max_iter).phi
        from .potentials import build_potential

        pot = build_potential(spec, grid)
        trace = dynamics.evolve(
            u0, pot, config.mu, config.p, config.dt, config.t_final,
            observer_stride=config.observer_stride,
            snapshot_stride=config.snapshot_stride or None)
        io.write_trace_csv(trace, out("trace.csv"))
        io.write_field(out("final.fld"), trace.final_state)
        io.write_report({"exit": trace.exit.as_dict(),
                         "samples": len(trace.times)},
                        out("report.json"), cfg)
        return 0

    if config.command == "instability":
        res = solve_ground_state(spec, config.omega, config.mu, config.p,
                                 grid, tol=config.tol,
                                 max_iter=config.max_iter)
        verdict = stability.instability_experiment(
            res, config.dilation, config.dt, config.t_final,
            config.mu, config.p,
            observer_stride=config.observer_stride)
        io.write_trace_csv(verdict.traces[0], out("trace.csv"))
        io.write_report(verdict.as_dict(), out("report.json"), cfg)
        return 0 if verdict.passed else 1

    if config.command == "stability":
        res = solve_ground_state(spec, config.omega, config.mu, config.p,
                                 grid, tol=config.tol,
                                 max_iter=config.max_iter)
        verdict = stability.stability_experiment(
            res, config.epsilon, config.seeds, config.dt, config.t_final,
            config.mu, config.p, seed0=config.seed,
            observer_stride=config.observer_stride)
        io.write_report(verdict.as_dict(), out("report.json"), cfg)
        return 0 if verdict.passed else 1

    if config.command == "limits":
        study = stability.rescaled_limit_study(
            spec, config.mu, config.p, list(config.omega_list), grid,
            tol=config.tol, max_iter=config.max_iter)
        with open(out("limits.csv"), "w") as fh:
            cols = ("omega", "converged", "hartree",
                    "rescaled_potential_energy", "h1_sq",
                    "h1_dist_to_limit", "gate_sign_value")
            fh.write(",".join(cols) + "\n")
            for row in study["rows"]:
                fh.write(",".join(str(row.get(c, "")) for c in cols) + "\n")
        io.write_report(study, out("report.json"), cfg)
        return 0

    raise ConfigError(f"unhandled command {config.command!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="choquard",
        description="Spectral laboratory for standing waves of the "
                    "generalized Choquard equation",
    )
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--grid-n", type=int, dest="grid_n")
    ap.add_argument("--box-l", type=float, dest="box_l")
    ap.add_argument("--mu", type=float)
    ap.add_argument("--p", type=float)
    ap.add_argument("--omega", type=float)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--max-iter", type=int, dest="max_iter")
    ap.add_argument("--dt", type=float)
    ap.add_argument("--t-final", type=float, dest="t_final")
    ap.add_argument("--lambda", type=float, dest="lambda_")
    ap.add_argument("--epsilon", type=float)
    ap.add_argument("--seeds", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--eig-count", type=int, dest="eig_count")
    ap.add_argument("--observer-stride", type=int, dest="observer_stride")
    ap.add_argument("--snapshot-stride", type=int, dest="snapshot_stride")
    ap.add_argument("--initial-field", dest="initial_field")
    ap.add_argument("--potential", help="inline JSON potential object")
    ap.add_argument("--out", help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "command": args.command,
        "grid_n": args.grid_n,
        "box_l": args.box_l,
        "mu": args.mu,
        "p": args.p,
        "omega": args.omega,
        "tol": args.tol,
        "max_iter": args.max_iter,
        "dt": args.dt,
        "t_final": args.t_final,
        "lambda": args.lambda_,
        "epsilon": args.epsilon,
        "seeds": args.seeds,
        "seed": args.seed,
        "eig_count": args.eig_count,
        "observer_stride": args.observer_stride,
        "snapshot_stride": args.snapshot_stride,
        "initial_field": args.initial_field,
        "out": args.out,
    }
    if args.potential:
        try:
            overrides["potential"] = json.loads(args.potential)
        except json.JSONDecodeError as exc:
            print(f"error: --potential is not valid JSON: {exc}", file=sys.stderr)
            return 2
    try:
        config = parse_config(args.config, overrides)
        return run_command(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
