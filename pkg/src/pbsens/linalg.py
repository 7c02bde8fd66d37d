"""Dense real matrix kernels sized for small-to-medium systems (n up to a few hundred).

All routines operate on plain float64 ``numpy`` arrays and are pure: inputs are
never mutated and identical inputs give bit-identical outputs.  The Frobenius
norm is the project-wide matrix norm.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "SingularMatrixError",
    "NearSingularMatrixWarning",
    "frobenius_norm",
    "mat_exp",
    "phi1",
    "solve_linear",
]


class SingularMatrixError(ValueError):
    """Linear solve hit a pivot that is zero to working precision.

    Attributes
    ----------
    pivot : float
        Magnitude of the offending pivot.
    threshold : float
        The singularity threshold ``1e-14 * ||A||_F`` that it failed.
    """

    def __init__(self, pivot: float, threshold: float):
        self.pivot = float(pivot)
        self.threshold = float(threshold)
        super().__init__(
            f"matrix singular to working precision: pivot magnitude "
            f"{self.pivot:.3e} below threshold {self.threshold:.3e}"
        )


class NearSingularMatrixWarning(RuntimeWarning):
    """A coefficient matrix assumed invertible is singular to working precision."""


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D matrix, got ndim={a.ndim}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name}: empty matrix of shape {a.shape}")
    return a


def _as_square(a, name: str) -> np.ndarray:
    a = _as_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name}: expected a square matrix, got shape {a.shape}")
    return a


def frobenius_norm(a) -> float:
    """Square root of the sum of squared entries (works for vectors too).

    Scaled by the largest magnitude so entries near the overflow threshold
    still give a finite norm; non-finite entries propagate.
    """
    flat = np.asarray(a, dtype=float).ravel()
    if flat.size == 0:
        return 0.0
    scale = float(np.max(np.abs(flat)))
    if scale == 0.0 or not math.isfinite(scale):
        return scale
    return scale * float(np.sqrt(np.sum(np.square(flat / scale))))


# Pade-13 numerator coefficients and the norm bound under which the
# approximant is accurate to unit roundoff (Higham's scaling-and-squaring).
_PADE13_B = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_PADE13_THETA = 5.371920351148152


def mat_exp(a) -> np.ndarray:
    """Matrix exponential ``e^A`` by scaling-and-squaring with a Pade-13 core.

    Parameters
    ----------
    a : array_like, shape (n, n)
        Square real matrix with finite entries.

    Returns
    -------
    ndarray, shape (n, n)

    Notes
    -----
    The matrix is scaled by ``2**-s`` until its 1-norm is below the Pade-13
    accuracy bound, the degree-13 rational approximant is evaluated, and the
    result is squared ``s`` times.  Relative accuracy is at the 1e-12 level
    in Frobenius norm for ``||A||_F <= 50``.
    """
    a = _as_square(a, "mat_exp")
    if not np.isfinite(a).all():
        raise ValueError("mat_exp: matrix has non-finite entries")
    norm = float(np.linalg.norm(a, 1))
    if norm > _PADE13_THETA:
        squarings = int(math.ceil(math.log2(norm / _PADE13_THETA)))
    else:
        squarings = 0
    x = a / float(2**squarings)

    b = _PADE13_B
    n = x.shape[0]
    ident = np.eye(n)
    x2 = x @ x
    x4 = x2 @ x2
    x6 = x4 @ x2
    u = x @ (x6 @ (b[13] * x6 + b[11] * x4 + b[9] * x2)
             + b[7] * x6 + b[5] * x4 + b[3] * x2 + b[1] * ident)
    v = (x6 @ (b[12] * x6 + b[10] * x4 + b[8] * x2)
         + b[6] * x6 + b[4] * x4 + b[2] * x2 + b[0] * ident)
    # The Pade denominator V - U is nonsingular for the scaled matrix.
    r = solve_linear(v - u, v + u)
    for _ in range(squarings):
        r = r @ r
    return r


def phi1(a) -> np.ndarray:
    """The matrix function ``M = sum_{h>=0} (-1)^h A^h / (h+1)!``.

    ``M`` satisfies ``M @ A == A @ M == I - mat_exp(-A)`` and is well defined
    for singular ``A``; it evaluates ``(I - e^{-A}) A^{-1}`` without an
    explicit inverse.

    Computed by its own scaled truncated series: ``A`` is halved ``s`` times
    until small, the series is summed, and the result is doubled back up with
    ``M(2X) = (I + e^{-X}) M(X) / 2``.
    """
    a = _as_square(a, "phi1")
    if not np.isfinite(a).all():
        raise ValueError("phi1: matrix has non-finite entries")
    norm = frobenius_norm(a)
    if norm > 0.5:
        s = int(math.ceil(math.log2(norm / 0.5)))
    else:
        s = 0
    x = a / float(2**s)

    n = x.shape[0]
    ident = np.eye(n)
    total = ident.copy()
    term = ident
    for h in range(1, 17):  # remainder below roundoff for ||X||_F <= 0.5
        term = (term @ x) / (-(h + 1))
        total += term
    if s:
        e = mat_exp(-x)
        for _ in range(s):
            total = 0.5 * ((ident + e) @ total)
            e = e @ e
    return total


def _lu_factor(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partial-pivot LU in place; returns (packed LU, row permutation)."""
    lu = a.copy()
    n = lu.shape[0]
    perm = np.arange(n)
    for k in range(n - 1):
        j = k + int(np.argmax(np.abs(lu[k:, k])))
        if j != k:
            lu[[k, j]] = lu[[j, k]]
            perm[[k, j]] = perm[[j, k]]
        pivot = lu[k, k]
        if pivot != 0.0:
            lu[k + 1:, k] /= pivot
            lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm


def min_pivot_magnitude(a) -> float:
    """Smallest absolute pivot of the partial-pivot LU of ``a``."""
    a = _as_square(a, "min_pivot_magnitude")
    lu, _ = _lu_factor(a)
    return float(np.min(np.abs(np.diag(lu))))


def solve_linear(a, b) -> np.ndarray:
    """Solve ``A X = B`` by partial-pivot LU.

    Parameters
    ----------
    a : array_like, shape (n, n)
    b : array_like, shape (n,) or (n, m)

    Raises
    ------
    SingularMatrixError
        If any pivot magnitude falls below ``1e-14 * ||A||_F``.
    """
    a = _as_square(a, "solve_linear")
    b = np.asarray(b, dtype=float)
    vector = b.ndim == 1
    if vector:
        b = b[:, None]
    elif b.ndim != 2:
        raise ValueError(f"solve_linear: rhs must be 1-D or 2-D, got ndim={b.ndim}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(
            f"solve_linear: rhs has {b.shape[0]} rows, matrix is {a.shape[0]}x{a.shape[1]}"
        )

    lu, perm = _lu_factor(a)
    pivots = np.abs(np.diag(lu))
    threshold = 1e-14 * frobenius_norm(a)
    smallest = float(np.min(pivots))
    if smallest < threshold or smallest == 0.0:
        raise SingularMatrixError(smallest, threshold)

    x = b[perm].copy()
    n = a.shape[0]
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            x[i] -= lu[i, i + 1:] @ x[i + 1:]
        x[i] /= lu[i, i]
    return x[:, 0] if vector else x
