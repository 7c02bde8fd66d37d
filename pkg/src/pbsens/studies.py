"""Experiment harness: method comparison, convergence order, runtime scaling.

Studies return a :class:`StudyReport`, a plain record of per-step traces,
per-level errors or per-dimension runtimes plus fitted regression results and
environment metadata.  Report serialization lives in :mod:`pbsens.csvio`.
"""

from __future__ import annotations

import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__ as _version
from .linalg import frobenius_norm
from .models import Model, get_model
from .ode import DEFAULT_H_TARGET, Trajectory, integrate, ramped_grid, uniform_grid
from .reference import (
    finite_difference_sensitivity,
    relative_error,
    run_forward_sensitivity,
)
from .sensitivity import (
    PbsrConfig,
    SensitivityTrajectory,
    run_exp,
    run_pbs_plain,
    run_pbsr,
)

__all__ = [
    "StudyReport",
    "METHODS",
    "fit_power_law",
    "fit_loglog_slope",
    "run_method",
    "reference_step",
    "harness_thread_cap",
    "default_compare_grid",
    "compare_study",
    "convergence_study",
    "scaling_study",
]

METHODS = ("pbsr", "exp", "pbs", "fs", "fd")

# Nominal spacing of the default comparison grid.  Coarse enough that the
# refinement machinery matters, fine enough to resolve oscillatory dynamics.
DEFAULT_COMPARE_DT = 0.05

# Error floor below which convergence levels are treated as integrator noise
# and excluded from slope fitting.
FLOOR_TOL = 1e-8


@dataclass
class StudyReport:
    """Results of one study run.

    Only the sections relevant to ``kind`` are populated: ``steps`` for
    comparisons (per-step relative errors and equilibrium flags),
    ``convergence`` plus ``slope`` for grid-refinement studies, ``scaling``
    plus ``fits`` for runtime studies.  ``metadata`` records the model, seeds,
    configuration and the wall-clock environment.
    """

    kind: str
    model: str
    metadata: dict = field(default_factory=dict)
    steps: list[dict] | None = None
    convergence: list[dict] | None = None
    slope: float | None = None
    scaling: list[dict] | None = None
    fits: dict[str, dict] | None = None


def _environment_note() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pbsens": _version,
        "machine": platform.machine(),
        "system": platform.system(),
    }


def harness_thread_cap() -> int:
    """Concurrency cap for independent harness jobs (env ``PBS_SENS_THREADS``)."""
    raw = os.environ.get("PBS_SENS_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError:
        return 1
    return max(1, cap)


def fit_loglog_slope(x, y) -> tuple[float, float]:
    """Least-squares slope and intercept of ``log2(y)`` against ``log2(x)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise ValueError("need at least two matching samples")
    if (x <= 0).any() or (y <= 0).any():
        raise ValueError("log-log fit needs positive samples")
    slope, intercept = np.polyfit(np.log2(x), np.log2(y), 1)
    return float(slope), float(intercept)


def fit_power_law(samples) -> tuple[float, float]:
    """Fit ``runtime = a * dimension**b`` by least squares on log-log data.

    Parameters
    ----------
    samples : sequence of (dimension, runtime) pairs
        At least five pairs, all positive.

    Returns
    -------
    (a, b) : tuple of float
    """
    pairs = [(float(n), float(r)) for n, r in samples]
    if len(pairs) < 5:
        raise ValueError(f"power-law fit needs at least 5 samples, got {len(pairs)}")
    ns = np.array([q[0] for q in pairs])
    rs = np.array([q[1] for q in pairs])
    if (ns <= 0).any():
        raise ValueError("dimensions must be positive")
    if (rs <= 0).any():
        raise ValueError("runtimes must be positive")
    b, log2_a = fit_loglog_slope(ns, rs)
    return float(2.0**log2_a), b


def reference_step(system, p, x0, accuracy: float = 1e-6, h_max: float = DEFAULT_H_TARGET) -> float:
    """Sub-step length resolving every Jacobian mode of the system at ``x0``.

    A fixed-step fourth-order scheme reproduces a mode of rate ``lam`` with
    relative accuracy about ``(h*lam)**4``, so ``h = accuracy**(1/4) / ||J||``
    keeps all modes at the requested accuracy; this also sits far inside the
    explicit stability region, which matters for stiff systems where the
    default ``h_max`` would diverge.
    """
    system.require_jacobians()
    j0 = np.asarray(system.jac_x(np.asarray(x0, dtype=float), system.input(0.0), np.asarray(p, dtype=float)))
    norm = frobenius_norm(j0)
    if norm == 0.0:
        return h_max
    return min(h_max, accuracy**0.25 / norm)


def run_method(
    method: str,
    model: Model,
    grid,
    config: PbsrConfig | None = None,
    h_target: float = DEFAULT_H_TARGET,
    fd_h: float | None = None,
) -> tuple[Trajectory, SensitivityTrajectory]:
    """Run one named algorithm for ``model`` on ``grid``.

    ``method`` is one of ``pbsr``, ``exp``, ``pbs`` (trajectory methods),
    ``fs`` (coupled forward integration) or ``fd`` (central differences).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    system, p, x0 = model.system, model.p, model.x0
    if method == "fs":
        return run_forward_sensitivity(system, p, x0, grid, h_target=h_target)
    traj = integrate(system, p, x0, grid, h_target=h_target)
    if method == "fd":
        sens = finite_difference_sensitivity(system, p, x0, grid, h=fd_h, h_target=h_target)
    elif method == "pbsr":
        sens = run_pbsr(system, traj, config)
    elif method == "exp":
        sens = run_exp(system, traj)
    else:
        sens = run_pbs_plain(system, traj, config)
    return traj, sens


def default_compare_grid(model: Model, dt: float = DEFAULT_COMPARE_DT) -> np.ndarray:
    """The comparison protocol's default grid over the model's span.

    Startup-ramped spacing (see :func:`pbsens.ode.ramped_grid`): adaptive
    solvers resolve the initial transient with short steps before settling at
    the nominal spacing, and the fixed-threshold equilibrium switch relies on
    that behaviour to stay out of the transient.
    """
    t0, t1 = model.tspan
    return ramped_grid(t0, t1, dt)


def compare_study(
    model_spec: str | Model,
    grid,
    config: PbsrConfig | None = None,
    methods: tuple[str, ...] = ("pbsr", "exp"),
    reference: str = "fs",
    h_target: float = DEFAULT_H_TARGET,
) -> StudyReport:
    """Relative-error traces of candidate methods against a reference method.

    Every run uses the identical grid.  The report rows carry the time, one
    relative error per candidate, and the equilibrium flag of the first
    candidate that has one (the switch markers in accuracy plots).
    """
    model = get_model(model_spec) if isinstance(model_spec, str) else model_spec
    grid = np.asarray(grid, dtype=float)
    _, ref_sens = run_method(reference, model, grid, config, h_target)

    cap = harness_thread_cap()

    def one(m: str) -> tuple[str, SensitivityTrajectory]:
        return m, run_method(m, model, grid, config, h_target)[1]

    if cap > 1 and len(methods) > 1:
        with ThreadPoolExecutor(max_workers=cap) as pool:
            results = dict(pool.map(one, methods))
    else:
        results = dict(one(m) for m in methods)
    errors = {m: relative_error(results[m], ref_sens) for m in methods}

    # switch markers come from the first switching-capable candidate
    flags_from = next((m for m in methods if m in ("pbsr", "pbs", "exp")), None)
    if flags_from is not None:
        flags = results[flags_from].equilibrium_flags
    else:
        flags = np.zeros(grid.size, dtype=bool)

    steps = []
    for k, t in enumerate(grid):
        row = {"t": float(t)}
        for m in methods:
            row[f"re_{m}"] = float(errors[m][k])
        row["eq_flag"] = bool(flags[k])
        steps.append(row)

    medians = {m: float(np.median(errors[m])) for m in methods}
    return StudyReport(
        kind="compare",
        model=model.name,
        metadata={
            "reference": reference,
            "methods": list(methods),
            "median_re": medians,
            "h_target": h_target,
            "config": vars(config) if config is not None else vars(PbsrConfig()),
            "flags_from": flags_from,
            "environment": _environment_note(),
        },
        steps=steps,
    )


def convergence_study(
    model_spec: str | Model,
    levels: int,
    base_dt: float,
    method: str = "pbs",
    config: PbsrConfig | None = None,
    h_target: float = DEFAULT_H_TARGET,
) -> StudyReport:
    """Grid-refinement study fitting the observed order of accuracy.

    Runs ``method`` on uniform grids with spacing ``base_dt, base_dt/2, ...``
    over the model's default span and fits ``log2(max error)`` against
    ``log2(dt)``.  The plain series driver runs with the switch disabled so
    the fit sees pure series steps.  Errors are measured against the model's
    closed-form sensitivity when it has one, otherwise against the forward
    reference on the same grid; levels at the integrator noise floor are
    excluded from the fit, and the slope is only reported when at least three
    levels remain.
    """
    if levels < 3:
        raise ValueError("convergence study needs at least 3 grid levels")
    if not base_dt > 0:
        raise ValueError("base_dt must be positive")
    model = get_model(model_spec) if isinstance(model_spec, str) else model_spec
    cfg = config if config is not None else PbsrConfig()
    if method in ("pbs", "pbsr"):
        cfg = replace(cfg, force_pbs=True)

    t0, t1 = model.tspan
    span = t1 - t0

    def one_level(level: int) -> dict:
        dt = base_dt / 2**level
        n_steps = max(1, round(span / dt))
        grid = uniform_grid(t0, t1, n_steps)
        _, sens = run_method(method, model, grid, cfg, h_target)
        if model.sensitivity is not None:
            exact = np.stack([model.sensitivity(t - t0) for t in grid])
        else:
            exact = run_forward_sensitivity(model.system, model.p, model.x0, grid, h_target)[1].matrices
        err = max(frobenius_norm(sens.matrices[k] - exact[k]) for k in range(grid.size))
        return {"dt_max": span / n_steps, "max_error": float(err)}

    cap = harness_thread_cap()
    if cap > 1:
        with ThreadPoolExecutor(max_workers=cap) as pool:
            records = list(pool.map(one_level, range(levels)))
    else:
        records = [one_level(level) for level in range(levels)]

    fit_pts = [(r["dt_max"], r["max_error"]) for r in records if r["max_error"] > FLOOR_TOL]
    slope = None
    if len(fit_pts) >= 3:
        slope, _ = fit_loglog_slope([q[0] for q in fit_pts], [q[1] for q in fit_pts])
    return StudyReport(
        kind="convergence",
        model=model.name,
        metadata={
            "method": method,
            "levels": levels,
            "base_dt": base_dt,
            "h_target": h_target,
            "config": vars(cfg),
            "at_floor": len(fit_pts) < 3,
            "environment": _environment_note(),
        },
        convergence=records,
        slope=slope,
    )


def scaling_study(
    dims,
    seeds: int = 1,
    reps: int = 10,
    t_final: float = 0.5,
    grid_intervals: int = 10,
    base_seed: int = 0,
    accuracy: float = 1e-6,
) -> StudyReport:
    """Runtime-scaling study on random linear systems.

    For each dimension ``n`` the forward reference, the refined series driver
    (switch disabled, so the series path is always exercised) and the
    exponential driver run on an identical uniform grid; each timed run covers
    the complete computation including its state integration.  Execution is
    pinned to a single BLAS thread, wall-clock medians are taken over
    ``seeds x reps`` runs, and ``runtime = a * n**b`` is fitted per algorithm
    when at least five dimensions are sampled.

    The integrator sub-step follows :func:`reference_step`: the random systems
    stiffen roughly like ``n^2``, so a fixed sub-step would diverge at larger
    ``n``.
    """
    dims = [int(n) for n in dims]
    if not dims:
        raise ValueError("need at least one dimension")
    if seeds < 1 or reps < 1:
        raise ValueError("seeds and reps must be at least 1")
    cfg = PbsrConfig(force_pbs=True)
    samples: list[dict] = []
    step_sizes: dict[int, float] = {}

    with threadpool_limits(limits=1):
        for n in dims:
            for s in range(seeds):
                model = get_model(f"random_linear:n={n}:seed={base_seed + s}")
                system, p, x0 = model.system, model.p, model.x0
                grid = uniform_grid(0.0, t_final, grid_intervals)
                h = reference_step(system, p, x0, accuracy=accuracy)
                step_sizes[n] = h
                for r in range(reps):
                    t_start = time.perf_counter()
                    traj = integrate(system, p, x0, grid, h_target=h)
                    run_pbsr(system, traj, cfg)
                    t_pbsr = time.perf_counter() - t_start

                    t_start = time.perf_counter()
                    traj = integrate(system, p, x0, grid, h_target=h)
                    run_exp(system, traj)
                    t_exp = time.perf_counter() - t_start

                    t_start = time.perf_counter()
                    run_forward_sensitivity(system, p, x0, grid, h_target=h)
                    t_fs = time.perf_counter() - t_start

                    for alg, rt in (("pbsr", t_pbsr), ("exp", t_exp), ("fs", t_fs)):
                        samples.append({"n": n, "seed": base_seed + s, "rep": r,
                                        "algorithm": alg, "runtime": rt})

    medians: list[dict] = []
    for alg in ("exp", "pbsr", "fs"):
        for n in dims:
            runtimes = [q["runtime"] for q in samples if q["algorithm"] == alg and q["n"] == n]
            medians.append({"n": n, "algorithm": alg, "runtime": float(np.median(runtimes))})

    fits: dict[str, dict] | None = None
    if len(dims) >= 5:
        fits = {}
        for alg in ("exp", "pbsr", "fs"):
            pts = [(q["n"], q["runtime"]) for q in medians if q["algorithm"] == alg]
            a, b = fit_power_law(pts)
            fits[alg] = {"a": a, "b": b}

    return StudyReport(
        kind="scaling",
        model="random_linear",
        metadata={
            "dims": dims,
            "seeds": seeds,
            "reps": reps,
            "t_final": t_final,
            "grid_intervals": grid_intervals,
            "base_seed": base_seed,
            "accuracy": accuracy,
            "step_sizes": {str(n): step_sizes[n] for n in dims},
            "threads": 1,
            "statistic": "median",
            "timing_includes_state_integration": True,
            "environment": _environment_note(),
        },
        scaling=medians,
        fits=fits,
    )
