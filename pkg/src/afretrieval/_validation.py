"""Input validation helpers shared by the public functions and estimators."""

from __future__ import annotations

import numbers

import numpy as np


def check_signal(x, name: str = "signal") -> np.ndarray:
    """Return ``x`` as a 1-D complex128 array, rejecting short or non-finite input."""
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise ValueError(f"{name} needs at least 2 samples, got {arr.shape[0]}")
    arr = arr.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_square(A, name: str = "A", dtype=np.float64) -> np.ndarray:
    arr = np.asarray(A)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be a square N x N matrix, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise ValueError(f"{name} must have N >= 2")
    if dtype is np.float64 and np.iscomplexobj(arr):
        raise ValueError(f"{name} must be real-valued")
    arr = arr.astype(dtype, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def split_masked(A, mask=None):
    """Split an AF into ``(values, kept)``.

    ``A`` may be a plain array or a ``numpy.ma.MaskedArray`` (masked cells are
    excluded). An explicit ``mask`` (boolean array or :class:`SamplingMask`) is
    combined with the array's own mask.
    """
    kept = None
    if isinstance(A, np.ma.MaskedArray):
        kept = ~np.ma.getmaskarray(A)
        A = A.filled(0.0)
    values = check_square(A)
    if mask is not None:
        m = np.asarray(getattr(mask, "kept", mask), dtype=bool)
        if m.shape != values.shape:
            raise ValueError(f"mask shape {m.shape} does not match AF shape {values.shape}")
        kept = m if kept is None else (kept & m)
    if kept is None:
        kept = np.ones(values.shape, dtype=bool)
    if not kept.any():
        raise ValueError("mask keeps no cells")
    return values, kept


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)
