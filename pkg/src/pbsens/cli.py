"""Command-line front end: compute, compare, convergence, scaling, list-models.

Every flag can also be supplied through a JSON config file (``--config``)
whose keys are the flag names with underscores; explicit command-line flags
win on conflict.  Exit codes: 0 success, 2 usage error, 3 numerical
divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .csvio import save_report, write_sensitivity_csv
from .models import get_model, list_models, model_accepts_seed
from .ode import DivergenceError, ramped_grid, uniform_grid
from .sensitivity import PbsrConfig
from .studies import (
    DEFAULT_COMPARE_DT,
    METHODS,
    compare_study,
    convergence_study,
    run_method,
    scaling_study,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3

_DEFAULTS = {
    "model": None,
    "method": None,  # per-command fallback: compute pbsr, compare pbsr,exp, convergence pbs
    "dt": None,  # per-command fallback: compare 0.05, others 0.01
    "grid_mode": None,  # per-command fallback: compare ramp, others uniform
    "h_target": 1e-2,
    "eps_tol": 1e-4,
    "n_max": 10,
    "refine_mult": 10.0,
    "force_pbs": False,
    "out": ".",
    "format": "csv",
    "reference": "fs",
    "levels": 5,
    "base_dt": 0.1,
    "dims": "5,10,20,40,60,80",
    "seeds": 1,
    "reps": 10,
    "t_final": 0.5,
    "grid_intervals": 10,
    "seed": None,
    "t0": None,
    "t1": None,
    "grid_file": None,
    "fd_h": None,
}


class UsageError(ValueError):
    """Bad command-line input (unknown model, malformed grid, ...)."""


def _add_common(sub: argparse.ArgumentParser) -> None:
    # required, but validated after the config merge so --config can supply it
    sub.add_argument("--model", default=None, help="model name, e.g. chua or random_linear:n=40:seed=7")
    sub.add_argument("--t0", type=float, default=None, help="start time (default: model span)")
    sub.add_argument("--t1", type=float, default=None, help="end time (default: model span)")
    sub.add_argument("--dt", type=float, default=None, help="nominal grid spacing")
    sub.add_argument("--grid-file", default=None, help="file with one ascending time per line")
    sub.add_argument("--grid-mode", choices=("uniform", "ramp"), default=None,
                     help="uniform spacing, or startup-ramped spacing growing to --dt")
    sub.add_argument("--eps-tol", type=float, default=None, help="equilibrium-switch relative tolerance")
    sub.add_argument("--n-max", type=int, default=None, help="refinement cap of the switch")
    sub.add_argument("--refine-mult", type=float, default=None, help="refinement multiplier")
    sub.add_argument("--force-pbs", action=argparse.BooleanOptionalAction, default=None,
                     help="disable the equilibrium switch")
    sub.add_argument("--seed", type=int, default=None, help="seed override for seeded models")
    sub.add_argument("--h-target", type=float, default=None, help="integrator sub-step target")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--format", choices=("csv", "json"), default=None, help="output format")
    sub.add_argument("--config", default=None, help="JSON file mirroring these flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pbs-sens",
        description="Sensitivity matrices of parametrised ODE systems, with benchmark studies.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_compute = subs.add_parser("compute", help="compute one sensitivity trajectory, write CSV")
    _add_common(p_compute)
    p_compute.add_argument("--method", choices=METHODS, default=None)
    p_compute.add_argument("--fd-h", type=float, default=None, help="finite-difference perturbation")

    p_compare = subs.add_parser("compare", help="relative errors of candidates against a reference")
    _add_common(p_compare)
    p_compare.add_argument("--method", default=None, help="comma-separated candidates (default pbsr,exp)")
    p_compare.add_argument("--reference", choices=METHODS, default=None)

    p_conv = subs.add_parser("convergence", help="grid-refinement order study")
    _add_common(p_conv)
    p_conv.add_argument("--method", choices=("pbs", "pbsr", "exp", "fs"), default=None)
    p_conv.add_argument("--levels", type=int, default=None, help="number of grid levels (>= 3)")
    p_conv.add_argument("--base-dt", type=float, default=None, help="coarsest grid spacing")

    p_scale = subs.add_parser("scaling", help="runtime-scaling study on random linear systems")
    p_scale.add_argument("--dims", default=None, help="comma-separated dimensions (>= 5 for the fit)")
    p_scale.add_argument("--seeds", type=int, default=None, help="random systems per dimension")
    p_scale.add_argument("--reps", type=int, default=None, help="timing repetitions (median)")
    p_scale.add_argument("--t-final", type=float, default=None, help="time span of each run")
    p_scale.add_argument("--grid-intervals", type=int, default=None, help="grid intervals per run")
    p_scale.add_argument("--seed", type=int, default=None, help="base seed")
    p_scale.add_argument("--out", default=None)
    p_scale.add_argument("--format", choices=("csv", "json"), default=None)
    p_scale.add_argument("--config", default=None)

    subs.add_parser("list-models", help="list registered models")
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, JSON config and explicit flags (flags win)."""
    merged = dict(_DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError(f"config {config_path} must hold a JSON object")
        unknown = set(loaded) - set(_DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(loaded)
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        if value is not None:
            merged[key] = value
    return merged


def _pbsr_config(opts: dict) -> PbsrConfig:
    return PbsrConfig(
        eps_tol=float(opts["eps_tol"]),
        n_max=int(opts["n_max"]),
        refine_mult=float(opts["refine_mult"]),
        force_pbs=bool(opts["force_pbs"]),
    )


def _load_model(opts: dict):
    spec = opts["model"]
    if not spec:
        raise UsageError("no model given (use --model or a config file)")
    if opts["seed"] is not None and model_accepts_seed(spec.split(":")[0]):
        spec = f"{spec}:seed={int(opts['seed'])}"
    try:
        return get_model(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _build_grid(
    opts: dict, tspan: tuple[float, float], default_dt: float = 1e-2, default_mode: str = "uniform"
) -> np.ndarray:
    if opts["grid_file"]:
        try:
            lines = Path(opts["grid_file"]).read_text().split()
        except OSError as exc:
            raise UsageError(f"cannot read grid file: {exc}") from exc
        try:
            times = np.array([float(v) for v in lines])
        except ValueError as exc:
            raise UsageError(f"grid file must hold one number per line: {exc}") from exc
        if times.size < 2 or not (np.diff(times) > 0).all():
            raise UsageError("grid file times must be strictly ascending (at least two)")
        return times
    t0 = opts["t0"] if opts["t0"] is not None else tspan[0]
    t1 = opts["t1"] if opts["t1"] is not None else tspan[1]
    dt = float(opts["dt"]) if opts["dt"] is not None else default_dt
    mode = opts["grid_mode"] or default_mode
    if not t1 > t0:
        raise UsageError(f"need t1 > t0, got [{t0}, {t1}]")
    if not dt > 0:
        raise UsageError("dt must be positive")
    if mode == "ramp":
        return ramped_grid(t0, t1, dt)
    return uniform_grid(t0, t1, max(1, round((t1 - t0) / dt)))


def _cmd_compute(opts: dict) -> int:
    model = _load_model(opts)
    method = opts["method"] or "pbsr"
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    grid = _build_grid(opts, model.tspan)
    cfg = _pbsr_config(opts)
    traj, sens = run_method(method, model, grid, cfg,
                            h_target=float(opts["h_target"]), fd_h=opts["fd_h"])
    out_dir = Path(opts["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{model.name.replace(':', '_')}_{method}"
    csv_path = out_dir / f"{stem}.csv"
    write_sensitivity_csv(csv_path, traj, sens)
    written = [csv_path]
    if opts["format"] == "json":
        payload = {
            "model": model.name, "method": sens.method,
            "times": traj.times.tolist(), "states": traj.states.tolist(),
            "sensitivities": sens.matrices.tolist(),
            "equilibrium_flags": sens.equilibrium_flags.tolist(),
        }
        json_path = out_dir / f"{stem}.json"
        json_path.write_text(json.dumps(payload, indent=2))
        written.append(json_path)
    for path in written:
        print(path)
    return EXIT_OK


def _cmd_compare(opts: dict) -> int:
    model = _load_model(opts)
    methods = tuple(m.strip() for m in str(opts["method"] or "pbsr,exp").split(",") if m.strip())
    if not methods:
        raise UsageError("no candidate methods given")
    for m in (*methods, opts["reference"]):
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    grid = _build_grid(opts, model.tspan, default_dt=DEFAULT_COMPARE_DT, default_mode="ramp")
    report = compare_study(model, grid, _pbsr_config(opts), methods=methods,
                           reference=opts["reference"], h_target=float(opts["h_target"]))
    for path in save_report(report, opts["out"], f"compare_{model.name}", opts["format"]):
        print(path)
    for m, med in report.metadata["median_re"].items():
        print(f"median re_{m} = {med:.3e}")
    return EXIT_OK


def _cmd_convergence(opts: dict) -> int:
    model = _load_model(opts)
    levels = int(opts["levels"])
    if levels < 3:
        raise UsageError("convergence needs at least 3 grid levels")
    method = opts["method"] or "pbs"
    if method not in ("pbs", "pbsr", "exp", "fs"):
        raise UsageError(f"unknown convergence method {method!r}")
    report = convergence_study(model, levels, float(opts["base_dt"]), method=method,
                               config=_pbsr_config(opts), h_target=float(opts["h_target"]))
    for path in save_report(report, opts["out"], f"convergence_{model.name}_{method}", opts["format"]):
        print(path)
    if report.slope is None:
        print("slope: not reported (errors at integrator noise floor)")
    else:
        print(f"fitted order: {report.slope:.3f}")
    return EXIT_OK


def _cmd_scaling(opts: dict) -> int:
    try:
        dims = [int(v) for v in str(opts["dims"]).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"malformed --dims: {exc}") from exc
    if not dims:
        raise UsageError("no dimensions given")
    report = scaling_study(
        dims,
        seeds=int(opts["seeds"]),
        reps=int(opts["reps"]),
        t_final=float(opts["t_final"]),
        grid_intervals=int(opts["grid_intervals"]),
        base_seed=int(opts["seed"]) if opts["seed"] is not None else 0,
    )
    for path in save_report(report, opts["out"], "scaling", opts["format"]):
        print(path)
    if report.fits:
        for alg in ("exp", "pbsr", "fs"):
            fit = report.fits[alg]
            print(f"{alg}: runtime ~ {fit['a']:.3e} * n^{fit['b']:.2f}")
    else:
        print("exponent fit skipped (need at least 5 dimensions)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    if args.command == "list-models":
        for name in list_models():
            print(name)
        return EXIT_OK
    try:
        opts = _resolve(args)
        if args.command == "compute":
            return _cmd_compute(opts)
        if args.command == "compare":
            return _cmd_compare(opts)
        if args.command == "convergence":
            return _cmd_convergence(opts)
        if args.command == "scaling":
            return _cmd_scaling(opts)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        step = f" at grid step {exc.step}" if exc.step is not None else ""
        print(f"numerical divergence{step}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
