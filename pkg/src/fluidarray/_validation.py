"""Input-validation helpers shared across modules."""

from __future__ import annotations

import numpy as np

HALF_PI = np.pi / 2.0


def as_float_array(x, name: str, ndim: int = 1) -> np.ndarray:
    """Coerce to a float64 ndarray of the given dimensionality."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def check_positive_scalar(value, name: str, allow_zero: bool = False) -> float:
    value = float(value)
    if allow_zero:
        if value < 0:
            raise ValueError(f"{name} must be >= 0, got {value}")
    elif value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    return value


def check_angles(doas, name: str = "doas") -> np.ndarray:
    """Validate DOA angles: radians, strictly increasing, inside (-pi/2, pi/2)."""
    doas = as_float_array(doas, name)
    if doas.size < 1:
        raise ValueError(f"{name} must contain at least one angle")
    if np.any(np.abs(doas) >= HALF_PI):
        raise ValueError(f"{name} must lie strictly inside (-pi/2, pi/2)")
    if doas.size > 1 and np.any(np.diff(doas) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return doas


def check_covariance_matrix(matrix, n: int | None = None) -> np.ndarray:
    """Validate a Hermitian PSD matrix within the documented tolerances."""
    R = np.asarray(matrix, dtype=complex)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError(f"covariance must be square, got shape {R.shape}")
    if n is not None and R.shape[0] != n:
        raise ValueError(f"covariance is {R.shape[0]}x{R.shape[0]}, expected {n}x{n}")
    scale = np.linalg.norm(R)
    if scale > 0 and np.linalg.norm(R - R.conj().T) > 1e-12 * scale:
        raise ValueError("covariance is not Hermitian within tolerance")
    trace = float(np.real(np.trace(R)))
    if scale > 0 and trace < -1e-12 * scale:
        raise ValueError("covariance is not positive semidefinite within tolerance")
    eigvals = np.linalg.eigvalsh(0.5 * (R + R.conj().T))
    floor = -1e-9 * trace if trace > 0 else -1e-12 * scale
    if scale > 0 and eigvals.min() < floor:
        raise ValueError("covariance is not positive semidefinite within tolerance")
    return R
