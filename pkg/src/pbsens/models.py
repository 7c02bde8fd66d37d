"""Built-in test systems with known structure.

Each constructor returns a :class:`Model` bundling the system with default
parameters, initial condition and time span; models with a closed-form
sensitivity also carry it for exact verification.  The registry is addressable
by name strings such as ``"chua"`` or ``"random_linear:n=40:seed=7"`` and is
extensible: plug in your own constructor with :func:`register_model`.

Random draws use numpy's named 64-bit PCG64 generator; published numbers for
the random models therefore depend on the seed, and tests should assert
structural properties (symmetry, sign-definiteness) rather than entry values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import mat_exp, solve_linear
from .ode import OdeSystem

__all__ = [
    "Model",
    "make_random_linear",
    "make_chua",
    "make_scalar_decay",
    "make_const_linear",
    "get_model",
    "list_models",
    "model_accepts_seed",
    "register_model",
    "check_jacobian_consistency",
]


@dataclass(frozen=True)
class Model:
    """A system plus its default parameters, start state and time span.

    ``sensitivity``, when present, maps a time ``t`` (measured from
    ``tspan[0]``) to the exact sensitivity matrix for the default setup.
    """

    system: OdeSystem
    p: np.ndarray
    x0: np.ndarray
    tspan: tuple[float, float]
    sensitivity: Callable[[float], np.ndarray] | None = None
    description: str = ""

    @property
    def name(self) -> str:
        return self.system.name


def make_scalar_decay() -> Model:
    """Scalar decay ``x' = -p x`` with closed-form sensitivity.

    With ``x(0) = x0`` the solution is ``x(t) = x0 exp(-p t)``, hence
    ``S(t) = dx/dp = -t x0 exp(-p t)``; defaults ``x0 = 1``, ``p = 1``.
    """
    system = OdeSystem(
        n_x=1,
        n_u=0,
        n_p=1,
        f=lambda x, u, p: -p * x,
        jac_x=lambda x, u, p: np.array([[-p[0]]]),
        jac_p=lambda x, u, p: np.array([[-x[0]]]),
        name="scalar_decay",
    )
    p0, x00 = 1.0, 1.0

    def sensitivity(t: float) -> np.ndarray:
        return np.array([[-t * x00 * np.exp(-p0 * t)]])

    return Model(
        system=system,
        p=np.array([p0]),
        x0=np.array([x00]),
        tspan=(0.0, 1.0),
        sensitivity=sensitivity,
        description="scalar decay x' = -p*x with closed-form sensitivity",
    )


def make_const_linear(n_x: int = 4, n_p: int = 3, seed: int = 1) -> Model:
    """Stable constant-coefficient system ``x' = A x + B p``.

    ``A = -M^T M - 0.1 I`` with ``M`` uniform on [0, 1), so the Jacobians
    ``jac_x = A`` and ``jac_p = B`` are constant and the sensitivity has the
    closed form ``S(t) = (e^{tA} - I) A^{-1} B`` from the zero start.
    """
    if n_x < 1 or n_p < 1:
        raise ValueError("dimensions must be at least 1")
    rng = np.random.default_rng(seed)
    m = rng.uniform(0.0, 1.0, size=(n_x, n_x))
    a = -(m.T @ m) - 0.1 * np.eye(n_x)
    b = rng.uniform(-1.0, 1.0, size=(n_x, n_p))
    a.setflags(write=False)
    b.setflags(write=False)

    system = OdeSystem(
        n_x=n_x,
        n_u=0,
        n_p=n_p,
        f=lambda x, u, p: a @ x + b @ p,
        jac_x=lambda x, u, p: a,
        jac_p=lambda x, u, p: b,
        name="const_linear",
    )

    def sensitivity(t: float) -> np.ndarray:
        return solve_linear(a, mat_exp(t * a) - np.eye(n_x)) @ b

    return Model(
        system=system,
        p=np.ones(n_p),
        x0=rng.uniform(-1.0, 1.0, size=n_x),
        tspan=(0.0, 1.0),
        sensitivity=sensitivity,
        description="stable constant-coefficient linear system with closed-form sensitivity",
    )


def make_random_linear(n: int = 10, seed: int = 0) -> Model:
    """Random stable linear system ``x' = A x + p^2 + u`` with ``u = 1``.

    ``A = -B^T B`` for ``B`` uniform on [0, 1), drawn together with ``p`` from
    a PCG64 generator; ``jac_x = A`` and ``jac_p = diag(2 p)``.  State,
    input and parameter dimensions all equal ``n``.
    """
    if n < 1:
        raise ValueError("dimension must be at least 1")
    rng = np.random.default_rng(seed)
    b = rng.uniform(0.0, 1.0, size=(n, n))
    a = -(b.T @ b)
    p_default = rng.uniform(0.0, 1.0, size=n)
    ones = np.ones(n)
    a.setflags(write=False)
    ones.setflags(write=False)

    system = OdeSystem(
        n_x=n,
        n_u=n,
        n_p=n,
        f=lambda x, u, p: a @ x + p * p + u,
        jac_x=lambda x, u, p: a,
        jac_p=lambda x, u, p: np.diag(2.0 * p),
        input=lambda t: ones,
        name="random_linear",
    )
    return Model(
        system=system,
        p=p_default,
        x0=np.zeros(n),
        tspan=(0.0, 1.0),
        description="random stable linear system for runtime-scaling studies",
    )


def make_chua() -> Model:
    """Chua-circuit oscillator, three states and two parameters.

    x1' = p1 (x2 - x1 - g(x1)),  g(x1) = -(8/7) x1 + (4/63) x1^3
    x2' = x1 - x2 + x3
    x3' = -p2 x2

    Defaults ``p = (7, 15)``, ``x0 = (0, 0, -0.1)``, time span [0, 10]; the
    trajectory converges to a limit cycle, so the Jacobian keeps varying.
    """

    def f(x, u, p):
        g = -(8.0 / 7.0) * x[0] + (4.0 / 63.0) * x[0] ** 3
        return np.array([
            p[0] * (x[1] - x[0] - g),
            x[0] - x[1] + x[2],
            -p[1] * x[1],
        ])

    def jac_x(x, u, p):
        g_prime = -(8.0 / 7.0) + (4.0 / 21.0) * x[0] ** 2
        return np.array([
            [p[0] * (-1.0 - g_prime), p[0], 0.0],
            [1.0, -1.0, 1.0],
            [0.0, -p[1], 0.0],
        ])

    def jac_p(x, u, p):
        g = -(8.0 / 7.0) * x[0] + (4.0 / 63.0) * x[0] ** 3
        return np.array([
            [x[1] - x[0] - g, 0.0],
            [0.0, 0.0],
            [0.0, -x[1]],
        ])

    system = OdeSystem(n_x=3, n_u=0, n_p=2, f=f, jac_x=jac_x, jac_p=jac_p, name="chua")
    return Model(
        system=system,
        p=np.array([7.0, 15.0]),
        x0=np.array([0.0, 0.0, -0.1]),
        tspan=(0.0, 10.0),
        description="Chua circuit converging to a limit cycle",
    )


_REGISTRY: dict[str, Callable[..., Model]] = {
    "scalar_decay": make_scalar_decay,
    "const_linear": make_const_linear,
    "random_linear": make_random_linear,
    "chua": make_chua,
}

# Which keyword arguments each registered constructor accepts from name strings.
_REGISTRY_KEYS: dict[str, dict[str, str]] = {
    "scalar_decay": {},
    "const_linear": {"nx": "n_x", "np": "n_p", "seed": "seed"},
    "random_linear": {"n": "n", "seed": "seed"},
    "chua": {},
}


def register_model(name: str, constructor: Callable[..., Model], keys: dict[str, str] | None = None) -> None:
    """Add a model constructor to the registry under ``name``."""
    _REGISTRY[name] = constructor
    _REGISTRY_KEYS[name] = keys or {}


def list_models() -> list[str]:
    """Registered model names."""
    return sorted(_REGISTRY)


def model_accepts_seed(name: str) -> bool:
    """Whether the named model takes a ``seed`` option in its name string."""
    return "seed" in _REGISTRY_KEYS.get(name, {})


def get_model(spec: str) -> Model:
    """Build a model from a name string like ``"random_linear:n=40:seed=7"``.

    Raises ``ValueError`` for unknown names, unknown keys or malformed values.
    """
    parts = spec.split(":")
    name = parts[0]
    if name not in _REGISTRY:
        raise ValueError(f"unknown model {name!r}; available: {', '.join(list_models())}")
    allowed = _REGISTRY_KEYS[name]
    kwargs = {}
    for part in parts[1:]:
        if "=" not in part:
            raise ValueError(f"malformed model option {part!r} in {spec!r} (expected key=value)")
        key, value = part.split("=", 1)
        if key not in allowed:
            raise ValueError(
                f"unknown option {key!r} for model {name!r}; allowed: {', '.join(allowed) or 'none'}"
            )
        try:
            kwargs[allowed[key]] = int(value)
        except ValueError as exc:
            raise ValueError(f"option {key!r} in {spec!r} must be an integer") from exc
    return _REGISTRY[name](**kwargs)


def check_jacobian_consistency(
    system: OdeSystem,
    x,
    p,
    t: float = 0.0,
    rtol: float = 1e-5,
) -> float:
    """Largest relative deviation of the analytic Jacobians from central differences.

    Compares ``jac_x`` and ``jac_p`` against second-order finite differences of
    ``f`` at the point ``(x, u(t), p)``; intended for test suites, not runtime.
    Raises ``AssertionError`` when the deviation exceeds ``rtol``.
    """
    system.require_jacobians()
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    u = system.input(t)

    def fd_jac(wrt_p: bool) -> np.ndarray:
        base = p if wrt_p else x
        cols = []
        for i in range(base.size):
            h = 1e-6 * max(1.0, abs(base[i]))
            plus = base.copy()
            minus = base.copy()
            plus[i] += h
            minus[i] -= h
            if wrt_p:
                cols.append((system.f(x, u, plus) - system.f(x, u, minus)) / (2 * h))
            else:
                cols.append((system.f(plus, u, p) - system.f(minus, u, p)) / (2 * h))
        return np.stack(cols, axis=1)

    worst = 0.0
    for analytic, fd in ((system.jac_x(x, u, p), fd_jac(False)), (system.jac_p(x, u, p), fd_jac(True))):
        analytic = np.asarray(analytic, dtype=float)
        scale = max(1.0, float(np.max(np.abs(analytic))))
        worst = max(worst, float(np.max(np.abs(analytic - fd))) / scale)
    if worst > rtol:
        raise AssertionError(
            f"analytic Jacobians of {system.name!r} deviate from finite differences "
            f"by {worst:.2e} (tolerance {rtol:.0e})"
        )
    return worst
