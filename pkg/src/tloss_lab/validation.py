"""Input validation and coercion helpers shared by the estimator API and CLI."""

from __future__ import annotations

import numpy as np

from .volumes import BinaryMask, Dims, ProbabilityMask, Volume3D

__all__ = ["as_volume", "as_mask", "as_probability", "check_same_dims"]


def as_volume(x, spacing=(1.0, 1.0, 1.0)) -> Volume3D:
    """Coerce a Volume3D or 3-D array-like to a Volume3D."""
    if isinstance(x, Volume3D):
        return x
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected a 3-D volume, got shape {arr.shape}")
    return Volume3D(Dims(*arr.shape), spacing, arr)


def as_mask(x, spacing=(1.0, 1.0, 1.0)) -> BinaryMask:
    """Coerce a BinaryMask or 3-D array-like of {0,1} to a BinaryMask."""
    if isinstance(x, BinaryMask):
        return x
    arr = np.asarray(x)
    if arr.ndim != 3:
        raise ValueError(f"expected a 3-D mask, got shape {arr.shape}")
    values = np.unique(arr)
    if not np.all(np.isin(values, (0, 1))):
        raise ValueError("mask values must be 0 or 1")
    return BinaryMask(Dims(*arr.shape), spacing, arr.astype(np.uint8))


def as_probability(x, spacing=(1.0, 1.0, 1.0)) -> ProbabilityMask:
    if isinstance(x, ProbabilityMask):
        return x
    if isinstance(x, Volume3D):
        return ProbabilityMask(x.dims, x.spacing, x.data)
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected a 3-D probability field, got shape {arr.shape}")
    return ProbabilityMask(Dims(*arr.shape), spacing, arr)


def check_same_dims(items, what: str = "volumes") -> tuple[int, int, int]:
    dims = None
    for item in items:
        d = item.dims.as_tuple() if hasattr(item, "dims") else np.asarray(item).shape
        if dims is None:
            dims = d
        elif d != dims:
            raise ValueError(f"{what} must share dims; got {dims} and {d}")
    if dims is None:
        raise ValueError(f"no {what} given")
    return dims
