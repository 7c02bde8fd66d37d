"""Ground-truth sensitivity generators.

The forward-sensitivity (FS) route integrates the coupled system

    x' = f(x, u, p),        S' = jac_x(x, u, p) S + jac_p(x, u, p)

as one augmented ODE of dimension ``n_x * (n_p + 1)``.  The finite-difference
(FD) route brute-forces each sensitivity column from central differences of
perturbed trajectories.  Both serve as references for relative-error
evaluation of the fast algorithms.
"""

from __future__ import annotations

import numpy as np

from .linalg import frobenius_norm
from .ode import DEFAULT_H_TARGET, OdeSystem, Trajectory, integrate
from .sensitivity import SensitivityTrajectory

__all__ = [
    "augment_state",
    "split_state",
    "run_forward_sensitivity",
    "finite_difference_sensitivity",
    "relative_error",
]


def augment_state(x: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Pack state ``x`` and sensitivity matrix ``s`` into one vector.

    The matrix is flattened column by column (one block per parameter), so the
    result has length ``n_x * (n_p + 1)``.  Exact inverse of
    :func:`split_state`.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != x.shape[0]:
        raise ValueError(f"sensitivity shape {s.shape} does not match state length {x.shape[0]}")
    return np.concatenate([x, s.flatten(order="F")])


def split_state(z: np.ndarray, n_x: int, n_p: int) -> tuple[np.ndarray, np.ndarray]:
    """Unpack an augmented vector into ``(x, S)``; inverse of :func:`augment_state`."""
    z = np.asarray(z, dtype=float)
    if z.shape != (n_x * (n_p + 1),):
        raise ValueError(f"augmented state has length {z.size}, expected {n_x * (n_p + 1)}")
    return z[:n_x], z[n_x:].reshape((n_x, n_p), order="F")


def _augmented_system(system: OdeSystem) -> OdeSystem:
    system.require_jacobians()
    n_x, n_p = system.n_x, system.n_p

    def f_aug(z, u, p):
        x = z[:n_x]
        s = z[n_x:].reshape((n_x, n_p), order="F")
        ds = system.jac_x(x, u, p) @ s + system.jac_p(x, u, p)
        return np.concatenate([system.f(x, u, p), ds.flatten(order="F")])

    return OdeSystem(
        n_x=n_x * (n_p + 1),
        n_u=system.n_u,
        n_p=n_p,
        f=f_aug,
        input=system.input,
        name=f"{system.name}+sensitivity",
    )


def run_forward_sensitivity(
    system: OdeSystem,
    p,
    x0,
    grid,
    h_target: float = DEFAULT_H_TARGET,
) -> tuple[Trajectory, SensitivityTrajectory]:
    """Integrate state and sensitivities together; the reference method.

    Returns the state trajectory and the sensitivity trajectory on the
    requested grid, starting from ``S = 0``.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (system.n_x,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({system.n_x},)")
    aug = _augmented_system(system)
    z0 = augment_state(x0, np.zeros((system.n_x, system.n_p)))
    aug_traj = integrate(aug, p, z0, grid, h_target=h_target)

    states = aug_traj.states[:, : system.n_x]
    mats = aug_traj.states[:, system.n_x:].reshape(
        (len(aug_traj), system.n_x, system.n_p), order="F"
    )
    traj = Trajectory(times=aug_traj.times.copy(), states=states.copy(), parameters=aug_traj.parameters)
    sens = SensitivityTrajectory(
        times=aug_traj.times.copy(),
        matrices=mats.copy(),
        method="FS",
        equilibrium_flags=np.zeros(len(aug_traj), dtype=bool),
    )
    return traj, sens


def finite_difference_sensitivity(
    system: OdeSystem,
    p,
    x0,
    grid,
    h: float | None = None,
    h_target: float = DEFAULT_H_TARGET,
) -> SensitivityTrajectory:
    """Central-difference sensitivities from perturbed trajectories.

    Column ``i`` is ``(x(t; p + h_i e_i) - x(t; p - h_i e_i)) / (2 h_i)``.
    By default ``h_i = 1e-5 * max(1, |p_i|)``, balancing truncation against
    integrator noise; pass ``h`` to fix one perturbation for all parameters.
    """
    p = np.asarray(p, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if h is not None and not h > 0:
        raise ValueError("perturbation h must be positive")
    mats = np.zeros((grid.size, system.n_x, p.size))
    for i in range(p.size):
        h_i = h if h is not None else 1e-5 * max(1.0, abs(p[i]))
        p_plus = p.copy()
        p_minus = p.copy()
        p_plus[i] += h_i
        p_minus[i] -= h_i
        traj_plus = integrate(system, p_plus, x0, grid, h_target=h_target)
        traj_minus = integrate(system, p_minus, x0, grid, h_target=h_target)
        mats[:, :, i] = (traj_plus.states - traj_minus.states) / (2.0 * h_i)
    mats[0] = 0.0  # exact: the initial state does not depend on p
    return SensitivityTrajectory(
        times=grid.copy(),
        matrices=mats,
        method="FD",
        equilibrium_flags=np.zeros(grid.size, dtype=bool),
    )


def relative_error(
    candidate: SensitivityTrajectory, reference: SensitivityTrajectory
) -> np.ndarray:
    """Per-step relative error of ``candidate`` against ``reference``.

    ``re_k = ||S_k^cand - S_k^ref||_F / ||S_k^ref||_F``; at steps where the
    reference is exactly zero (such as ``k = 0``) the absolute error
    ``||S_k^cand||_F`` is reported instead.
    """
    if candidate.times.shape != reference.times.shape or not np.array_equal(
        candidate.times, reference.times
    ):
        raise ValueError("candidate and reference are on different grids")
    if candidate.matrices.shape != reference.matrices.shape:
        raise ValueError(
            f"shape mismatch: candidate {candidate.matrices.shape} vs "
            f"reference {reference.matrices.shape}"
        )
    out = np.empty(candidate.times.size)
    for k in range(out.size):
        ref_norm = frobenius_norm(reference.matrices[k])
        diff_norm = frobenius_norm(candidate.matrices[k] - reference.matrices[k])
        out[k] = diff_norm / ref_norm if ref_norm > 0.0 else frobenius_norm(candidate.matrices[k])
    return out
