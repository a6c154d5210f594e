"""Dense 3D voxel containers, axis transforms, smoothing, and MVOL file IO.

Data layout is row-major (d, h, w) with w fastest, i.e. plain C order.
All containers are treated as immutable after construction: operations
return new objects and never mutate their inputs.

MVOL format (little-endian, no padding, no compression):
  magic "MVOL" | u32 version=1 | u32 d,h,w | f32 spacing_d,h,w |
  u8 dtype (0 = u8 mask, 1 = f32 field) | payload of d*h*w elements.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

__all__ = [
    "Dims",
    "Volume3D",
    "BinaryMask",
    "ProbabilityMask",
    "MvolError",
    "binarize",
    "flip_axis",
    "swap_axes",
    "gaussian_smooth",
    "save_volume",
    "load_volume",
]

_MAGIC = b"MVOL"
_VERSION = 1
_HEADER = struct.Struct("<4s4I3fB")
_DTYPE_MASK = 0
_DTYPE_FIELD = 1


class MvolError(Exception):
    """Raised for malformed or mismatched binary volume files."""


@dataclass(frozen=True)
class Dims:
    d: int
    h: int
    w: int

    def __post_init__(self):
        for name in ("d", "h", "w"):
            n = getattr(self, name)
            if not isinstance(n, int) or n < 1:
                raise ValueError(f"Dims.{name} must be an integer >= 1, got {n!r}")
        if self.count > 2**31:
            raise ValueError(f"voxel count {self.count} exceeds 2^31")

    @property
    def count(self) -> int:
        return self.d * self.h * self.w

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.d, self.h, self.w)


def _check_spacing(spacing) -> tuple[float, float, float]:
    s = tuple(float(x) for x in spacing)
    if len(s) != 3 or any(x <= 0 or not math.isfinite(x) for x in s):
        raise ValueError(f"spacing must be three positive finite values, got {spacing!r}")
    return s


def _check_shape(data: np.ndarray, dims: Dims) -> None:
    if data.shape != dims.as_tuple():
        raise ValueError(f"data shape {data.shape} does not match dims {dims.as_tuple()}")


@dataclass
class Volume3D:
    """Dense real-valued field; data is float64, shape (d, h, w)."""

    dims: Dims
    spacing: tuple[float, float, float]
    data: np.ndarray

    def __post_init__(self):
        self.spacing = _check_spacing(self.spacing)
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        _check_shape(self.data, self.dims)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("Volume3D data must be finite")

    @classmethod
    def from_array(cls, arr, spacing=(1.0, 1.0, 1.0)) -> "Volume3D":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(Dims(*arr.shape), spacing, arr)


@dataclass
class BinaryMask:
    """Per-voxel {0,1} labels; data is uint8, shape (d, h, w)."""

    dims: Dims
    spacing: tuple[float, float, float]
    data: np.ndarray

    def __post_init__(self):
        self.spacing = _check_spacing(self.spacing)
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        _check_shape(self.data, self.dims)
        if self.data.max(initial=0) > 1:
            raise ValueError("BinaryMask values must be 0 or 1")

    @classmethod
    def from_array(cls, arr, spacing=(1.0, 1.0, 1.0)) -> "BinaryMask":
        arr = np.asarray(arr)
        return cls(Dims(*arr.shape), spacing, arr.astype(np.uint8))

    def count_foreground(self) -> int:
        return int(self.data.sum())


@dataclass
class ProbabilityMask:
    """Per-voxel probabilities in [0, 1]; data is float64, shape (d, h, w)."""

    dims: Dims
    spacing: tuple[float, float, float]
    data: np.ndarray

    def __post_init__(self):
        self.spacing = _check_spacing(self.spacing)
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        _check_shape(self.data, self.dims)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("ProbabilityMask data must be finite")
        if self.data.min(initial=0.0) < 0.0 or self.data.max(initial=0.0) > 1.0:
            raise ValueError("ProbabilityMask values must lie in [0, 1]")

    @classmethod
    def from_array(cls, arr, spacing=(1.0, 1.0, 1.0)) -> "ProbabilityMask":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(Dims(*arr.shape), spacing, arr)


AnyVolume = Volume3D | BinaryMask | ProbabilityMask


def binarize(y: ProbabilityMask, tau: float = 0.5) -> BinaryMask:
    """Threshold a probability mask; ties (y == tau) go to foreground."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau!r}")
    return BinaryMask(y.dims, y.spacing, (y.data >= tau).astype(np.uint8))


def flip_axis(v: AnyVolume, axis: int):
    """Reverse one axis; an involution that preserves dims and spacing."""
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis!r}")
    return type(v)(v.dims, v.spacing, np.flip(v.data, axis=axis).copy())


def swap_axes(v: AnyVolume, ax1: int, ax2: int):
    """Transpose two axes in dims, spacing and data."""
    if ax1 not in (0, 1, 2) or ax2 not in (0, 1, 2):
        raise ValueError("axes must be 0, 1 or 2")
    if ax1 == ax2:
        raise ValueError("swap_axes requires two distinct axes")
    dims = list(v.dims.as_tuple())
    spacing = list(v.spacing)
    dims[ax1], dims[ax2] = dims[ax2], dims[ax1]
    spacing[ax1], spacing[ax2] = spacing[ax2], spacing[ax1]
    data = np.ascontiguousarray(np.swapaxes(v.data, ax1, ax2))
    return type(v)(Dims(*dims), tuple(spacing), data)


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Truncated normalized Gaussian, radius ceil(3*sigma)."""
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


def gaussian_smooth(v: Volume3D, sigma: float) -> Volume3D:
    """Separable Gaussian smoothing with clamp-to-border (edge replication)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma!r}")
    kernel = gaussian_kernel_1d(sigma)
    out = v.data
    for axis in range(3):
        out = correlate1d(out, kernel, axis=axis, mode="nearest")
    return Volume3D(v.dims, v.spacing, out)


def smooth_field(data: np.ndarray, sigma: float) -> np.ndarray:
    """gaussian_smooth on a bare array; used where containers are overhead."""
    kernel = gaussian_kernel_1d(sigma)
    out = np.asarray(data, dtype=np.float64)
    for axis in range(3):
        out = correlate1d(out, kernel, axis=axis, mode="nearest")
    return out


def save_volume(path, v: AnyVolume) -> None:
    """Write a volume or mask as MVOL. Fields persist as f32."""
    if isinstance(v, BinaryMask):
        dtype_code = _DTYPE_MASK
        payload = v.data.tobytes()
    elif isinstance(v, (Volume3D, ProbabilityMask)):
        dtype_code = _DTYPE_FIELD
        payload = v.data.astype("<f4").tobytes()
    else:
        raise TypeError(f"cannot save object of type {type(v).__name__}")
    header = _HEADER.pack(
        _MAGIC,
        _VERSION,
        v.dims.d,
        v.dims.h,
        v.dims.w,
        v.spacing[0],
        v.spacing[1],
        v.spacing[2],
        dtype_code,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_volume(path, expect: str | None = None):
    """Read an MVOL file; returns Volume3D or BinaryMask depending on dtype.

    expect may be "field" or "mask" to enforce the stored dtype.
    """
    if expect not in (None, "field", "mask"):
        raise ValueError(f"expect must be None, 'field' or 'mask', got {expect!r}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise MvolError(
            f"{path}: truncated header, need {_HEADER.size} bytes, got {len(raw)}"
        )
    magic, version, d, h, w, sd, sh, sw, dtype_code = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise MvolError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise MvolError(f"{path}: unsupported version {version}")
    if min(d, h, w) < 1 or d * h * w > 2**31:
        raise MvolError(f"{path}: invalid dims ({d}, {h}, {w})")
    if dtype_code not in (_DTYPE_MASK, _DTYPE_FIELD):
        raise MvolError(f"{path}: unknown dtype code {dtype_code}")
    elem = 1 if dtype_code == _DTYPE_MASK else 4
    expected = _HEADER.size + d * h * w * elem
    if len(raw) < expected:
        raise MvolError(f"{path}: truncated payload, missing {expected - len(raw)} bytes")
    if len(raw) > expected:
        raise MvolError(f"{path}: {len(raw) - expected} trailing bytes after payload")
    if expect == "mask" and dtype_code != _DTYPE_MASK:
        raise MvolError(f"{path}: expected mask payload, found field")
    if expect == "field" and dtype_code != _DTYPE_FIELD:
        raise MvolError(f"{path}: expected field payload, found mask")
    dims = Dims(d, h, w)
    spacing = (sd, sh, sw)
    body = raw[_HEADER.size :]
    if dtype_code == _DTYPE_MASK:
        data = np.frombuffer(body, dtype=np.uint8).reshape(dims.as_tuple()).copy()
        if data.max(initial=0) > 1:
            raise MvolError(f"{path}: mask payload contains values other than 0/1")
        return BinaryMask(dims, spacing, data)
    data = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(dims.as_tuple())
    if not np.all(np.isfinite(data)):
        raise MvolError(f"{path}: field payload contains non-finite values")
    return Volume3D(dims, spacing, data)
