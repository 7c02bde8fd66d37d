"""ODE model abstraction and a fixed-step fourth-order integrator.

The integrator produces states on exactly the grid the caller requests; each
requested interval is split internally into uniform Runge-Kutta sub-steps no
longer than ``h_target``.  Everything is deterministic: identical inputs give
bit-identical trajectories.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .linalg import frobenius_norm

__all__ = [
    "OdeSystem",
    "Trajectory",
    "DivergenceError",
    "StabilityWarning",
    "integrate",
    "interpolate",
    "uniform_grid",
    "jittered_grid",
    "ramped_grid",
]

DEFAULT_H_TARGET = 1e-2

# Real-axis stability bound of the classical fourth-order scheme.
_RK4_STABILITY = 2.785


class StabilityWarning(RuntimeWarning):
    """The integrator sub-step is outside the scheme's stability region.

    A fixed-step explicit scheme on a stiff system can grow fast modes
    without ever overflowing, silently corrupting the trajectory; choose a
    smaller ``h_target`` (see :func:`pbsens.studies.reference_step`).
    """


class DivergenceError(RuntimeError):
    """The numerical solution left the finite floats.

    Attributes
    ----------
    time : float
        Time at which the first non-finite value appeared.
    step : int or None
        Grid step index, when the failure is tied to a grid interval.
    """

    def __init__(self, time: float, step: int | None = None, what: str = "state"):
        self.time = float(time)
        self.step = step
        at = f" (grid step {step})" if step is not None else ""
        super().__init__(f"non-finite {what} at t={self.time:.6g}{at}")


@dataclass(frozen=True)
class OdeSystem:
    """A parametrised vector field ``x' = f(x, u(t), p)`` with analytic Jacobians.

    ``f(x, u, p)`` returns the state derivative (length ``n_x``); ``jac_x`` and
    ``jac_p`` return the ``n_x x n_x`` and ``n_x x n_p`` Jacobians of ``f`` at
    the same arguments.  ``input(t)`` returns the external input of length
    ``n_u``.  Implementations must be reentrant (no interior mutation).

    Jacobians may be ``None`` for systems only ever integrated (for example
    internally built augmented systems); the sensitivity algorithms require
    both.
    """

    n_x: int
    n_u: int
    n_p: int
    f: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    jac_x: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None
    jac_p: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None
    input: Callable[[float], np.ndarray] | None = None
    name: str = ""

    def __post_init__(self):
        if self.n_x < 1 or self.n_u < 0 or self.n_p < 0:
            raise ValueError(f"invalid dimensions n_x={self.n_x}, n_u={self.n_u}, n_p={self.n_p}")
        if self.input is None:
            zero_u = np.zeros(self.n_u)
            zero_u.setflags(write=False)
            object.__setattr__(self, "input", lambda t: zero_u)

    def require_jacobians(self) -> None:
        if self.jac_x is None or self.jac_p is None:
            raise ValueError(f"system {self.name!r} does not provide analytic Jacobians")


@dataclass(frozen=True)
class Trajectory:
    """Numerical states on a strictly increasing time grid, with the ``p`` used.

    ``dt_max`` and ``dt_min`` are the extreme grid spacings.  Values are
    immutable after construction and safe to share between threads.
    """

    times: np.ndarray
    states: np.ndarray
    parameters: np.ndarray
    dt_max: float = field(init=False)
    dt_min: float = field(init=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        parameters = np.asarray(self.parameters, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("times must be a 1-D grid with at least two points")
        if states.ndim != 2 or states.shape[0] != times.size:
            raise ValueError(
                f"states shape {states.shape} does not match {times.size} grid points"
            )
        steps = np.diff(times)
        if not (steps > 0).all():
            raise ValueError("times must be strictly increasing")
        for arr in (times, states, parameters):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "parameters", parameters)
        object.__setattr__(self, "dt_max", float(steps.max()))
        object.__setattr__(self, "dt_min", float(steps.min()))

    def __len__(self) -> int:
        return self.times.size


def uniform_grid(t0: float, t1: float, n_steps: int) -> np.ndarray:
    """Uniform grid of ``n_steps`` intervals over ``[t0, t1]``."""
    if n_steps < 1:
        raise ValueError("need at least one interval")
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    return np.linspace(float(t0), float(t1), n_steps + 1)


def jittered_grid(t0: float, t1: float, n_steps: int, seed: int, jitter: float = 0.2) -> np.ndarray:
    """Uniform grid with interior nodes perturbed by up to ``jitter`` of a step.

    Seeded and deterministic; endpoints stay fixed and monotonicity is
    preserved for ``jitter < 0.5``.
    """
    if not 0 <= jitter < 0.5:
        raise ValueError("jitter must lie in [0, 0.5)")
    grid = uniform_grid(t0, t1, n_steps)
    h = (t1 - t0) / n_steps
    rng = np.random.default_rng(seed)
    grid[1:-1] += h * rng.uniform(-jitter, jitter, size=n_steps - 1)
    return grid


def ramped_grid(
    t0: float, t1: float, dt: float, h0: float | None = None, growth: float = 1.2
) -> np.ndarray:
    """Grid whose spacing starts at ``h0`` and grows geometrically up to ``dt``.

    Mirrors the startup behaviour of adaptive solvers, whose output grids the
    experiment grids stand in for: the initial transient is resolved with
    short steps (default ``h0 = dt / 50``) before the spacing settles at
    ``dt``.  The final point is snapped to ``t1``.
    """
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if h0 is None:
        h0 = dt / 50.0
    if not 0 < h0 <= dt:
        raise ValueError("need 0 < h0 <= dt")
    if growth <= 1.0:
        raise ValueError("growth must exceed 1")
    points = [float(t0)]
    h = float(h0)
    while points[-1] + h < t1 - 1e-12 * (t1 - t0):
        points.append(points[-1] + h)
        h = min(h * growth, dt)
    points.append(float(t1))
    return np.array(points)


def _warn_if_unstable(system: OdeSystem, p, x0, grid, h_target: float) -> None:
    """One-shot stiffness heuristic from the Jacobian at the initial state."""
    if system.jac_x is None:
        return
    try:
        j0 = np.asarray(system.jac_x(x0, system.input(float(grid[0])), p), dtype=float)
        norm = frobenius_norm(j0)
    except Exception:  # a broken Jacobian must not block plain integration
        return
    h_eff = min(h_target, float(np.max(np.diff(grid))))
    if math.isfinite(norm) and norm * h_eff > _RK4_STABILITY:
        warnings.warn(
            f"sub-step {h_eff:.3g} times Jacobian norm {norm:.3g} exceeds the "
            f"fourth-order stability bound ({_RK4_STABILITY}); the trajectory "
            "may grow without diverging — use a smaller h_target",
            StabilityWarning,
            stacklevel=3,
        )


def _rk4_step(deriv, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = deriv(t, x)
    k2 = deriv(t + 0.5 * h, x + (0.5 * h) * k1)
    k3 = deriv(t + 0.5 * h, x + (0.5 * h) * k2)
    k4 = deriv(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    system: OdeSystem,
    p,
    x0,
    grid,
    h_target: float = DEFAULT_H_TARGET,
) -> Trajectory:
    """Integrate ``system`` at parameters ``p`` from ``x0`` over ``grid``.

    Classical fourth-order Runge-Kutta; each grid interval of length ``dt`` is
    split into ``ceil(dt / h_target)`` equal sub-steps.  The returned states sit
    at exactly the requested grid points.

    Raises
    ------
    DivergenceError
        If any state component becomes non-finite, naming the failure time.
    """
    p = np.asarray(p, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must contain at least two time points")
    if not (np.diff(grid) > 0).all():
        raise ValueError("grid must be strictly increasing")
    if x.shape != (system.n_x,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({system.n_x},)")
    if h_target <= 0:
        raise ValueError("h_target must be positive")
    if not np.isfinite(x).all():
        raise DivergenceError(grid[0], step=0, what="initial state")

    def deriv(t, y):
        return system.f(y, system.input(t), p)

    _warn_if_unstable(system, p, x, grid, h_target)
    states = np.empty((grid.size, system.n_x))
    states[0] = x
    # Overflow is detected explicitly below; keep numpy quiet about the
    # intermediate infs a diverging trajectory produces.
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(grid.size - 1):
            t_a, t_b = grid[k], grid[k + 1]
            # Small slack so an interval equal to a multiple of h_target is
            # not split one time too many by floating-point noise.
            n_sub = max(1, math.ceil((t_b - t_a) / h_target - 1e-9))
            h = (t_b - t_a) / n_sub
            for j in range(n_sub):
                t = t_a + j * h
                x = _rk4_step(deriv, t, x, h)
            if not np.isfinite(x).all():
                raise DivergenceError(t_b, step=k + 1)
            states[k + 1] = x
    return Trajectory(times=grid, states=states, parameters=p)


def interpolate(traj: Trajectory, t: float) -> np.ndarray:
    """Piecewise-linear interpolant of the trajectory at time ``t``.

    Exact (stored value) at grid nodes; raises for ``t`` outside the grid.
    """
    times = traj.times
    t = float(t)
    if t < times[0] or t > times[-1]:
        raise ValueError(f"t={t:.6g} outside trajectory range [{times[0]:.6g}, {times[-1]:.6g}]")
    k = int(np.searchsorted(times, t, side="right")) - 1
    if k >= times.size - 1:
        return traj.states[-1].copy()
    if t == times[k]:
        return traj.states[k].copy()
    theta = (t - times[k]) / (times[k + 1] - times[k])
    return traj.states[k] + theta * (traj.states[k + 1] - traj.states[k])
