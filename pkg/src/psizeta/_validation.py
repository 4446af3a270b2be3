"""Input validation helpers shared by the numeric modules."""

from __future__ import annotations

import numbers

import numpy as np

MAX_FIBER_DIM = 16


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix (or a stack of them) fails the Hermitian PD checks."""


class SpecError(ValueError):
    """Raised for malformed operator specifications; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class PoleError(ValueError):
    """Raised when a trace function is evaluated exactly at a pole."""


def check_fiber_matrix(a, name="matrix"):
    """Return ``a`` as a complex array of shape ``(..., n, n)`` with finite entries."""
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"{name} must have shape (..., n, n), got {a.shape}")
    n = a.shape[-1]
    if not 1 <= n <= MAX_FIBER_DIM:
        raise ValueError(f"{name}: fiber dimension {n} outside [1, {MAX_FIBER_DIM}]")
    a = a.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def check_same_fiber(a, b, names=("A", "B")):
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(
            f"fiber dimensions differ: {names[0]} is {a.shape[-1]}, {names[1]} is {b.shape[-1]}"
        )


def check_complex(s, name="s"):
    if isinstance(s, numbers.Number) and not isinstance(s, bool):
        s = complex(s)
        if np.isfinite(s.real) and np.isfinite(s.imag):
            return s
    raise ValueError(f"{name} must be a finite complex number, got {s!r}")


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_positive(value, name):
    value = float(value)
    if not (value > 0 and np.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return value


def as_complex_array(values, name="s"):
    """Coerce a scalar or sequence of complex numbers to a 1-D complex array."""
    arr = np.atleast_1d(np.asarray(values, dtype=np.complex128))
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be a finite 1-D sequence of complex numbers")
    return arr
