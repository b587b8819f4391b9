"""Input validation helpers.

These mirror the small ``check_*`` helpers found in scikit-learn: they coerce
array-likes to float arrays, verify shapes, and raise package exceptions with
a message naming the offending argument.
"""
from __future__ import annotations

import numpy as np

from ._exceptions import DimensionMismatch, InvalidParameters


def check_matrix(A, name, n=None, error=DimensionMismatch):
    """Return ``A`` as a finite square float matrix, optionally of size ``n``."""
    A = np.array(A, dtype=float, copy=True)
    if A.ndim == 0 and n == 1:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise error(f"{name} must be a square matrix, got shape {A.shape}")
    if n is not None and A.shape[0] != n:
        raise error(f"{name} must be {n}x{n}, got {A.shape[0]}x{A.shape[1]}")
    if not np.all(np.isfinite(A)):
        raise error(f"{name} has non-finite entries")
    A.setflags(write=False)
    return A


def check_vector(x, name, n=None, error=DimensionMismatch):
    """Return ``x`` as a finite 1-d float vector, optionally of length ``n``."""
    x = np.array(x, dtype=float, copy=True)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1:
        raise error(f"{name} must be one-dimensional, got shape {x.shape}")
    if n is not None and x.shape[0] != n:
        raise error(f"{name} must have length {n}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise error(f"{name} has non-finite entries")
    x.setflags(write=False)
    return x


def check_scalar(value, name, *, low=None, high=None, low_open=False,
                 high_open=False, error=InvalidParameters):
    value = float(value)
    if not np.isfinite(value):
        raise error(f"{name} must be finite, got {value}")
    if low is not None and (value < low or (low_open and value == low)):
        raise error(f"{name} must be {'>' if low_open else '>='} {low}, got {value}")
    if high is not None and (value > high or (high_open and value == high)):
        raise error(f"{name} must be {'<' if high_open else '<='} {high}, got {value}")
    return value


def is_symmetric(A, rtol=1e-12):
    A = np.asarray(A, dtype=float)
    scale = max(np.linalg.norm(A), 1.0) if A.size else 1.0
    return bool(np.linalg.norm(A - A.T) <= rtol * scale)


def min_eigenvalue(A):
    """Smallest eigenvalue of the symmetric part of ``A``."""
    A = np.asarray(A, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])


def is_psd(A, rtol=1e-12):
    """Symmetric and nonnegative definite up to ``rtol * ||A||``."""
    if not is_symmetric(A):
        return False
    scale = np.linalg.norm(A)
    return min_eigenvalue(A) >= -rtol * max(scale, np.finfo(float).tiny)


def check_psd(A, name, error=InvalidParameters):
    if not is_symmetric(A):
        raise error(f"{name} must be symmetric")
    if not is_psd(A):
        raise error(f"{name} must be nonnegative definite "
                    f"(min eigenvalue {min_eigenvalue(A):.3e})")
    return A


def check_positive_definite(A, name, error=InvalidParameters):
    """Raise unless the symmetric part of ``A`` admits a Cholesky factor."""
    try:
        np.linalg.cholesky(0.5 * (A + A.T))
    except np.linalg.LinAlgError:
        raise error(f"symmetric part of {name} is not positive definite") from None
    return A
