"""Dense least-squares, ridge and soft-threshold primitives.

All solvers go through an orthogonal decomposition (LAPACK ``gelsd``) rather
than forming ``X^T X``: the full one-hot district block plus an intercept
column is exactly collinear.
"""

from __future__ import annotations

import numpy as np


class NumericsError(ValueError):
    pass


def _as_system(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1:
        raise NumericsError(f"expected a matrix and a vector, got shapes {x.shape} and {y.shape}")
    if x.shape[0] != y.shape[0]:
        raise NumericsError(f"dimension mismatch: x has {x.shape[0]} rows, y has {y.shape[0]}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise NumericsError("empty system")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise NumericsError("non-finite input")
    return x, y


def solve_least_squares(x, y) -> np.ndarray:
    """Minimum-norm minimiser of ``||y - x b||^2``."""
    x, y = _as_system(x, y)
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    return beta


def solve_ridge(x, y, lam: float, penalize_intercept: bool = True, intercept_index: int = 0) -> np.ndarray:
    """Minimiser of ``||y - x b||^2 + lam * ||b'||^2``.

    ``b'`` excludes column ``intercept_index`` when ``penalize_intercept`` is
    false. Solved as the augmented least-squares problem
    ``[x; sqrt(lam) I'] b ~ [y; 0]``, so ``lam == 0`` reduces exactly to
    :func:`solve_least_squares`.
    """
    x, y = _as_system(x, y)
    if not lam >= 0:
        raise NumericsError(f"ridge penalty must be non-negative, got {lam}")
    if lam == 0:
        return solve_least_squares(x, y)
    p = x.shape[1]
    penalty = np.sqrt(lam) * np.eye(p)
    if not penalize_intercept:
        penalty = np.delete(penalty, intercept_index, axis=0)
    aug_x = np.vstack([x, penalty])
    aug_y = np.concatenate([y, np.zeros(penalty.shape[0])])
    beta, *_ = np.linalg.lstsq(aug_x, aug_y, rcond=None)
    return beta


def soft_threshold(z, gamma):
    """``sign(z) * max(|z| - gamma, 0)``; works on scalars and arrays."""
    if np.any(np.asarray(gamma) < 0):
        raise NumericsError("threshold must be non-negative")
    out = np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)
    return float(out) if np.ndim(out) == 0 else out
