"""Input validation helpers used by the estimators and core functions."""
from __future__ import annotations

import numpy as np

from .errors import NumericalError, PfsaFormatError

ROW_SUM_TOL = 1e-12
CHECK_TOL = 1e-9


def as_square_matrix(pi) -> np.ndarray:
    """Coerce to a float ndarray and require a square 2-D shape."""
    arr = np.asarray(pi, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise PfsaFormatError(f"expected a square matrix, got shape {arr.shape}")
    return arr


def check_transition_matrix(pi, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """Validate a row-stochastic transition matrix and return it as ndarray."""
    arr = as_square_matrix(pi)
    if not np.all(np.isfinite(arr)):
        raise PfsaFormatError("transition matrix has non-finite entries")
    if np.any(arr < -tol):
        raise PfsaFormatError("transition matrix has negative entries")
    row_sums = arr.sum(axis=1)
    bad = np.where(np.abs(row_sums - 1.0) > tol)[0]
    if bad.size:
        raise PfsaFormatError(
            f"rows {bad.tolist()} sum to {row_sums[bad].tolist()}, expected 1"
        )
    return arr


def check_theta(theta: float) -> float:
    """Require theta strictly inside (0, 1)."""
    theta = float(theta)
    if not (0.0 < theta < 1.0):
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    return theta


def check_characteristic(chi, n: int) -> np.ndarray:
    """Validate a characteristic vector: length n, entries in [-1, 1]."""
    arr = np.asarray(chi, dtype=float).reshape(-1)
    if arr.shape[0] != n:
        raise PfsaFormatError(f"characteristic length {arr.shape[0]} != {n} states")
    if np.any(np.abs(arr) > 1.0 + CHECK_TOL):
        raise PfsaFormatError("characteristic entries must lie in [-1, 1]")
    return arr


def check_residual(residual: float, bound: float, context: str) -> None:
    """Raise if a solver residual exceeds its contract bound."""
    if not np.isfinite(residual) or residual > bound:
        raise NumericalError(f"{context}: residual {residual:.3e} exceeds {bound:.3e}")
