"""Small argument-checking helpers used at public API boundaries.

Internal code paths assume arrays are already well-formed; public
entry points call these so mistakes surface with the argument name
in the message instead of a numpy broadcast error three frames down.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, ShapeError

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def as_float_array(x, name: str, dtype=None) -> np.ndarray:
    """Coerce ``x`` to a float32/float64 ndarray.

    Lists and integer arrays are converted to ``dtype`` (default
    float64); float arrays keep their precision unless ``dtype`` is
    given explicitly.
    """
    arr = np.asarray(x)
    if arr.dtype in _FLOAT_DTYPES and dtype is None:
        return arr
    if dtype is None:
        dtype = np.float64
    try:
        return arr.astype(dtype)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name}: cannot interpret as a float array ({exc})") from None


def check_rank(x: np.ndarray, name: str, rank) -> None:
    ranks = (rank,) if isinstance(rank, int) else tuple(rank)
    if x.ndim not in ranks:
        want = " or ".join(str(r) for r in ranks)
        raise ShapeError(f"{name}: expected rank {want}, got rank {x.ndim} (shape {x.shape})")


def check_shape(x: np.ndarray, name: str, shape: Sequence) -> None:
    """Check a shape pattern where ``None`` entries match anything."""
    if x.ndim != len(shape):
        raise ShapeError(f"{name}: expected rank {len(shape)}, got rank {x.ndim} (shape {x.shape})")
    for axis, want in enumerate(shape):
        if want is not None and x.shape[axis] != want:
            pattern = tuple("*" if s is None else s for s in shape)
            raise ShapeError(f"{name}: expected shape {pattern}, got {x.shape}")


def check_finite(x: np.ndarray, name: str) -> None:
    if not np.isfinite(x).all():
        raise InputError(f"{name}: contains non-finite values")


def check_in_range(x: np.ndarray, name: str, lo: float, hi: float) -> None:
    if x.size and (x.min() < lo or x.max() > hi):
        raise InputError(
            f"{name}: values must lie in [{lo}, {hi}], got range "
            f"[{x.min():.6g}, {x.max():.6g}]"
        )


def check_choice(value, name: str, options: Iterable) -> None:
    opts = tuple(options)
    if value not in opts:
        raise InputError(f"{name}: expected one of {opts}, got {value!r}")


def check_positive(value, name: str, strict: bool = True) -> None:
    if strict and not value > 0:
        raise InputError(f"{name}: must be > 0, got {value!r}")
    if not strict and not value >= 0:
        raise InputError(f"{name}: must be >= 0, got {value!r}")


def check_probability(value, name: str) -> None:
    if not 0.0 <= value <= 1.0:
        raise InputError(f"{name}: must lie in [0, 1], got {value!r}")
