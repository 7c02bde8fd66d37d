"""Sensitivity propagation along an ODE trajectory.

Three trajectory drivers approximate ``S(t) = dx/dp`` (an ``n_x x n_p`` matrix
with ``S(t_0) = 0``) from a precomputed state trajectory:

* ``run_pbs_plain`` -- one truncated Peano-Baker-series step per grid interval;
* ``run_pbsr``      -- the same step on a per-interval uniform sub-grid whose
  resolution follows the local Jacobian norm, with an equilibrium switch that
  falls back to the constant-coefficient exponential update;
* ``run_exp``       -- the exponential update on every interval, never refined.

The single-step operations they are built from are exposed as well.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import (
    NearSingularMatrixWarning,
    frobenius_norm,
    mat_exp,
    min_pivot_magnitude,
    phi1,
)
from .ode import DivergenceError, OdeSystem, Trajectory

__all__ = [
    "PbsrConfig",
    "StepJacobians",
    "SensitivityTrajectory",
    "pbs_phi_forward",
    "pbs_phi_backward",
    "pbs_step",
    "exp_step",
    "refinement_count",
    "switch_to_exp",
    "run_pbsr",
    "run_exp",
    "run_pbs_plain",
]


@dataclass(frozen=True)
class PbsrConfig:
    """Switching and refinement constants for the refined series driver.

    ``eps_tol``     relative Jacobian-change threshold of the equilibrium switch;
    ``n_max``       refinement cap: more sub-intervals than this also switches;
    ``refine_mult`` multiplier in ``n_int = ceil(refine_mult * dt * ||J||)``;
    ``force_pbs``   disables the switch entirely (series steps everywhere).
    """

    eps_tol: float = 1e-4
    n_max: int = 10
    refine_mult: float = 10.0
    force_pbs: bool = False

    def __post_init__(self):
        if not self.eps_tol > 0:
            raise ValueError("eps_tol must be positive")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if not self.refine_mult > 0:
            raise ValueError("refine_mult must be positive")


@dataclass(frozen=True)
class StepJacobians:
    """Jacobians of the vector field at the two endpoints of one step.

    ``j_a``/``j_b`` are the ``n_x x n_x`` state Jacobians and ``b_a``/``b_b``
    the ``n_x x n_p`` parameter Jacobians at the left/right endpoint; ``dt``
    is the step length.  A zero ``dt`` is allowed so the transition matrices
    reduce exactly to the identity; trajectory drivers always pass ``dt > 0``.
    """

    j_a: np.ndarray
    j_b: np.ndarray
    b_a: np.ndarray
    b_b: np.ndarray
    dt: float

    def __post_init__(self):
        j_a = np.asarray(self.j_a, dtype=float)
        j_b = np.asarray(self.j_b, dtype=float)
        b_a = np.asarray(self.b_a, dtype=float)
        b_b = np.asarray(self.b_b, dtype=float)
        n = j_a.shape[0]
        if j_a.ndim != 2 or j_a.shape != (n, n):
            raise ValueError(f"j_a must be square, got shape {j_a.shape}")
        if j_b.shape != (n, n):
            raise ValueError(f"j_b shape {j_b.shape} does not match j_a {j_a.shape}")
        if b_a.ndim != 2 or b_a.shape[0] != n or b_b.shape != b_a.shape:
            raise ValueError(
                f"parameter Jacobians must be {n} x n_p, got {b_a.shape} and {b_b.shape}"
            )
        if not self.dt >= 0:
            raise ValueError("dt must be nonnegative")
        object.__setattr__(self, "j_a", j_a)
        object.__setattr__(self, "j_b", j_b)
        object.__setattr__(self, "b_a", b_a)
        object.__setattr__(self, "b_b", b_b)
        object.__setattr__(self, "dt", float(self.dt))


@dataclass(frozen=True)
class SensitivityTrajectory:
    """Sequence of sensitivity matrices on a time grid.

    ``matrices[k]`` is the ``n_x x n_p`` sensitivity at ``times[k]``; the first
    one is always zero.  ``equilibrium_flags[k]`` records whether the step
    ending at ``times[k]`` used the exponential (equilibrium) update.
    ``method`` is a label such as ``"PBSR"``, ``"PBS"``, ``"EXP"``, ``"FS"``
    or ``"FD"``.
    """

    times: np.ndarray
    matrices: np.ndarray
    method: str
    equilibrium_flags: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        matrices = np.asarray(self.matrices, dtype=float)
        flags = np.asarray(self.equilibrium_flags, dtype=bool)
        if matrices.ndim != 3 or matrices.shape[0] != times.size:
            raise ValueError(
                f"need one matrix per time point, got {matrices.shape} for {times.size} points"
            )
        if flags.shape != times.shape:
            raise ValueError("need one equilibrium flag per time point")
        if not np.isfinite(matrices).all():
            raise ValueError("sensitivity matrices must be finite")
        if np.any(matrices[0] != 0.0):
            raise ValueError("the initial sensitivity matrix must be zero")
        for arr in (times, matrices, flags):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "matrices", matrices)
        object.__setattr__(self, "equilibrium_flags", flags)

    def __len__(self) -> int:
        return self.times.size


def _phi_pair(sj: StepJacobians) -> tuple[np.ndarray, np.ndarray]:
    """Forward and backward truncated transition matrices sharing one product."""
    j_sum = sj.j_a + sj.j_b
    i1 = (0.5 * sj.dt) * j_sum
    i2 = (0.25 * sj.dt * sj.dt) * (sj.j_b @ j_sum)
    ident = np.eye(sj.j_a.shape[0])
    return ident + i1 + i2, ident - i1 + i2


def pbs_phi_forward(sj: StepJacobians) -> np.ndarray:
    """Truncated-series transition matrix over the step, left to right.

    ``I + I1 + I2`` with the trapezoidal iterated integrals
    ``I1 = (dt/2)(J_a + J_b)`` and ``I2 = (dt^2/4) J_b (J_a + J_b)``.
    """
    return _phi_pair(sj)[0]


def pbs_phi_backward(sj: StepJacobians) -> np.ndarray:
    """Truncated-series transition matrix over the reversed step: ``I - I1 + I2``."""
    return _phi_pair(sj)[1]


def pbs_step(s_k: np.ndarray, sj: StepJacobians) -> np.ndarray:
    """One truncated-series update of the sensitivity matrix.

    Returns ``Phi_fwd @ (S + (dt/2) (B_a + Phi_bwd @ B_b))`` where the forcing
    integral uses the trapezoidal rule with the backward transition matrix.
    """
    s_k = np.asarray(s_k, dtype=float)
    if s_k.shape != sj.b_a.shape:
        raise ValueError(f"sensitivity shape {s_k.shape} does not match forcing {sj.b_a.shape}")
    fwd, bwd = _phi_pair(sj)
    return fwd @ (s_k + (0.5 * sj.dt) * (sj.b_a + bwd @ sj.b_b))


def exp_step(s_k: np.ndarray, j: np.ndarray, b: np.ndarray, dt: float) -> np.ndarray:
    """Constant-coefficient exponential update of the sensitivity matrix.

    Evaluates ``e^{dt J} (S + (I - e^{-dt J}) J^{-1} B)`` as
    ``e^{dt J} (S + dt * phi1(dt J) @ B)`` so singular ``J`` is handled; the
    two forms agree whenever ``J`` is invertible.  Emits
    ``NearSingularMatrixWarning`` when ``J`` is singular to working precision.
    """
    s_k = np.asarray(s_k, dtype=float)
    j = np.asarray(j, dtype=float)
    b = np.asarray(b, dtype=float)
    if j.ndim != 2 or j.shape[0] != j.shape[1]:
        raise ValueError(f"J must be square, got shape {j.shape}")
    if b.ndim != 2 or b.shape[0] != j.shape[0] or s_k.shape != b.shape:
        raise ValueError(
            f"shape mismatch: J {j.shape}, B {b.shape}, S {s_k.shape}"
        )
    if not dt > 0:
        raise ValueError("dt must be positive")
    if min_pivot_magnitude(j) < 1e-14 * max(frobenius_norm(j), 1e-300):
        warnings.warn(
            "state Jacobian singular to working precision in exponential step; "
            "series evaluation remains well defined",
            NearSingularMatrixWarning,
            stacklevel=2,
        )
    x = dt * j
    return mat_exp(x) @ (s_k + dt * (phi1(x) @ b))


def refinement_count(dt: float, j_norm: float, cfg: PbsrConfig) -> int:
    """Number of uniform sub-intervals for one grid interval.

    ``ceil(refine_mult * dt * j_norm)`` floored at one sub-interval.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not j_norm >= 0:
        raise ValueError("j_norm must be nonnegative")
    count = cfg.refine_mult * dt * j_norm
    if not math.isfinite(count):
        raise ValueError(f"refinement count overflow (dt={dt}, j_norm={j_norm})")
    return max(1, int(math.ceil(count)))


def switch_to_exp(j_a: np.ndarray, j_b: np.ndarray, n_int: int, cfg: PbsrConfig) -> bool:
    """Whether a step should use the exponential update instead of the series.

    True when the relative Jacobian change ``||J_b - J_a|| / ||J_a||`` is below
    ``cfg.eps_tol`` or the required refinement ``n_int`` exceeds ``cfg.n_max``.
    A zero left Jacobian counts as relative change zero (switch).  With
    ``cfg.force_pbs`` the answer is always False.
    """
    j_a = np.asarray(j_a, dtype=float)
    j_b = np.asarray(j_b, dtype=float)
    if j_a.shape != j_b.shape:
        raise ValueError(f"Jacobian shapes differ: {j_a.shape} vs {j_b.shape}")
    if cfg.force_pbs:
        return False
    if n_int > cfg.n_max:
        return True
    norm_a = frobenius_norm(j_a)
    if norm_a == 0.0:
        return True
    return frobenius_norm(j_b - j_a) / norm_a < cfg.eps_tol


def _node_jacobians(
    system: OdeSystem, traj: Trajectory
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Evaluate the state and parameter Jacobians at every grid node."""
    system.require_jacobians()
    p = traj.parameters
    js: list[np.ndarray] = []
    bs: list[np.ndarray] = []
    for t, x in zip(traj.times, traj.states):
        u = system.input(t)
        j = np.asarray(system.jac_x(x, u, p), dtype=float)
        b = np.asarray(system.jac_p(x, u, p), dtype=float)
        if j.shape != (system.n_x, system.n_x):
            raise ValueError(f"jac_x returned shape {j.shape}, expected ({system.n_x}, {system.n_x})")
        if b.shape != (system.n_x, system.n_p):
            raise ValueError(f"jac_p returned shape {b.shape}, expected ({system.n_x}, {system.n_p})")
        js.append(j)
        bs.append(b)
    return js, bs


def _check_finite(s: np.ndarray, k: int, t: float) -> None:
    if not np.isfinite(s).all():
        raise DivergenceError(t, step=k, what="sensitivity matrix")


def _assemble(
    traj: Trajectory, mats: Sequence[np.ndarray], method: str, flags: Sequence[bool]
) -> SensitivityTrajectory:
    return SensitivityTrajectory(
        times=traj.times.copy(),
        matrices=np.stack(mats),
        method=method,
        equilibrium_flags=np.asarray(flags, dtype=bool),
    )


def run_exp(system: OdeSystem, traj: Trajectory) -> SensitivityTrajectory:
    """Exponential update on every grid interval, never refined.

    Uses the left-endpoint Jacobians on each interval; exact whenever the
    Jacobians are constant along the trajectory.
    """
    js, bs = _node_jacobians(system, traj)
    s = np.zeros((system.n_x, system.n_p))
    mats = [s]
    flags = [False]
    # divergence is detected explicitly; silence the infs on the way there
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(len(traj) - 1):
            dt = float(traj.times[k + 1] - traj.times[k])
            s = exp_step(s, js[k], bs[k], dt)
            _check_finite(s, k + 1, traj.times[k + 1])
            mats.append(s)
            flags.append(True)
    return _assemble(traj, mats, "EXP", flags)


def run_pbsr(
    system: OdeSystem, traj: Trajectory, config: PbsrConfig | None = None
) -> SensitivityTrajectory:
    """Refined truncated-series driver with equilibrium switching.

    Per interval: evaluate the endpoint Jacobians; if the equilibrium switch
    fires, apply the exponential update with the left-endpoint Jacobians.
    Otherwise split the interval into ``n_int`` uniform sub-intervals, linearly
    interpolate the state at sub-nodes, and chain one series step per
    sub-interval.  The equilibrium flags record where the switch fired.
    """
    cfg = config if config is not None else PbsrConfig()
    js, bs = _node_jacobians(system, traj)
    p = traj.parameters
    s = np.zeros((system.n_x, system.n_p))
    mats = [s]
    flags = [False]
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(len(traj) - 1):
            t_k = float(traj.times[k])
            dt = float(traj.times[k + 1] - t_k)
            n_int = refinement_count(dt, frobenius_norm(js[k]), cfg)
            if switch_to_exp(js[k], js[k + 1], n_int, cfg):
                s = exp_step(s, js[k], bs[k], dt)
                fired = True
            else:
                h = dt / n_int
                x_k = traj.states[k]
                x_diff = traj.states[k + 1] - x_k
                j_a, b_a = js[k], bs[k]
                for i in range(1, n_int + 1):
                    if i == n_int:
                        j_b, b_b = js[k + 1], bs[k + 1]
                    else:
                        t_b = t_k + (i / n_int) * dt
                        x_b = x_k + (i / n_int) * x_diff
                        u_b = system.input(t_b)
                        j_b = np.asarray(system.jac_x(x_b, u_b, p), dtype=float)
                        b_b = np.asarray(system.jac_p(x_b, u_b, p), dtype=float)
                    s = pbs_step(s, StepJacobians(j_a, j_b, b_a, b_b, h))
                    j_a, b_a = j_b, b_b
                fired = False
            _check_finite(s, k + 1, traj.times[k + 1])
            mats.append(s)
            flags.append(fired)
    return _assemble(traj, mats, "PBSR", flags)


def run_pbs_plain(
    system: OdeSystem, traj: Trajectory, config: PbsrConfig | None = None
) -> SensitivityTrajectory:
    """Plain truncated-series driver: one series step per grid interval.

    Keeps the same equilibrium switch as :func:`run_pbsr` but never refines,
    which makes it the natural choice for convergence studies on
    caller-controlled uniform grids (usually with ``force_pbs``).
    """
    cfg = config if config is not None else PbsrConfig()
    js, bs = _node_jacobians(system, traj)
    s = np.zeros((system.n_x, system.n_p))
    mats = [s]
    flags = [False]
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(len(traj) - 1):
            dt = float(traj.times[k + 1] - traj.times[k])
            n_int = refinement_count(dt, frobenius_norm(js[k]), cfg)
            if switch_to_exp(js[k], js[k + 1], n_int, cfg):
                s = exp_step(s, js[k], bs[k], dt)
                fired = True
            else:
                s = pbs_step(s, StepJacobians(js[k], js[k + 1], bs[k], bs[k + 1], dt))
                fired = False
            _check_finite(s, k + 1, traj.times[k + 1])
            mats.append(s)
            flags.append(fired)
    return _assemble(traj, mats, "PBS", flags)
