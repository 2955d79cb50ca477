"""Dense linear-algebra substrate: SPD solves and finite-difference utilities.

Everything here operates on plain float64 numpy arrays. Vectors are 1-D
arrays, symmetric matrices are square 2-D arrays. All functions are pure
and deterministic; factorizations are LAPACK Cholesky, never explicit
inverses (dimensions stay small, so dense factorization is cheap and
stable).
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg


class NonPositiveDefiniteError(Exception):
    """Cholesky factorization failed; caller must raise the damping."""


def as_vector(values) -> np.ndarray:
    """Coerce to a finite float64 1-D array, rejecting NaN/Inf."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite entries")
    return v


def check_symmetric(m: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Validate a square matrix is symmetric to relative tolerance rtol."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.abs(m).max(), 1.0)
    if np.abs(m - m.T).max() > rtol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    return m


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _default_damping(m: np.ndarray) -> float:
    # Scale-aware fallback regularizer used when factorization fails at 0.
    d = m.shape[0]
    return 1e-4 * float(np.trace(m)) / d if d else 0.0


class SpdFactor:
    """Cached Cholesky factorization of (m + damping * I).

    Immutable after construction; safe for concurrent solves. `damping_used`
    records the damping that actually produced the factorization (the
    requested value, or the scale-aware default when the request was 0 and
    failed).
    """

    def __init__(self, m: np.ndarray, damping: float = 0.0):
        m = check_symmetric(m)
        if damping < 0:
            raise ValueError("damping must be >= 0")
        self.dim = m.shape[0]
        try:
            self._factor = scipy.linalg.cho_factor(
                m + damping * np.eye(self.dim), lower=True
            )
            self.damping_used = damping
        except np.linalg.LinAlgError as exc:
            if damping != 0.0:
                raise NonPositiveDefiniteError(str(exc)) from exc
            fallback = _default_damping(m)
            try:
                self._factor = scipy.linalg.cho_factor(
                    m + fallback * np.eye(self.dim), lower=True
                )
                self.damping_used = fallback
            except np.linalg.LinAlgError as exc2:
                raise NonPositiveDefiniteError(str(exc2)) from exc2

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=np.float64)
        if rhs.shape[0] != self.dim:
            raise ValueError(
                f"rhs has length {rhs.shape[0]}, expected {self.dim}"
            )
        return scipy.linalg.cho_solve(self._factor, rhs)


def solve_spd(m: np.ndarray, rhs: np.ndarray, damping: float = 0.0) -> np.ndarray:
    """Solve (m + damping * I) v = rhs via Cholesky.

    When damping is 0 and the factorization fails, a scale-aware default
    damping of 1e-4 * trace(m)/d is tried once before raising
    NonPositiveDefiniteError.
    """
    return SpdFactor(m, damping).solve(rhs)


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a vector."""
    if h <= 0:
        raise ValueError("h must be > 0")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (f(x + step) - f(x - step)) / (2.0 * h)
    return grad
