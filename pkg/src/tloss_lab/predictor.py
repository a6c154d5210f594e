"""Per-voxel probability predictor: fixed features plus a small MLP.

Features per voxel: the z-scored intensity, z-scored Gaussian-smoothed
intensities (one per configured sigma), and the voxel coordinates mapped
linearly to [-1, 1] per axis. The trainable part is a one-hidden-layer tanh
MLP with a sigmoid output, small enough that its backward pass is written out
exactly and checked against finite differences.

Parameters persist as an MPRM binary: magic "MPRM", u32 version=1,
u32 n_in, u32 hidden, then the float64 payload W1 (row-major), b1, w2, b2.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .rng import Rng
from .special import sigmoid
from .volumes import MvolError, Volume3D, smooth_field

__all__ = [
    "FeatureConfig",
    "PredictorParams",
    "PredictorGrads",
    "extract_features",
    "forward",
    "backward",
    "init_params",
    "save_params",
    "load_params",
]

_MPRM_MAGIC = b"MPRM"
_MPRM_VERSION = 1
_MPRM_HEADER = struct.Struct("<4s3I")


@dataclass(frozen=True)
class FeatureConfig:
    smooth_sigmas: tuple[float, ...] = (1.0, 2.0)
    include_coords: bool = True

    def __post_init__(self):
        if any(s <= 0 for s in self.smooth_sigmas):
            raise ValueError("smoothing sigmas must be > 0")

    @property
    def n_features(self) -> int:
        return 1 + len(self.smooth_sigmas) + (3 if self.include_coords else 0)


@dataclass
class PredictorParams:
    w1: np.ndarray  # (hidden, n_in)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = float(self.b2)
        hidden, n_in = self.w1.shape
        if self.b1.shape != (hidden,) or self.w2.shape != (hidden,):
            raise ValueError("parameter shapes are inconsistent")
        for arr in (self.w1, self.b1, self.w2):
            if not np.all(np.isfinite(arr)):
                raise ValueError("parameters must be finite")

    @property
    def n_in(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def copy(self) -> "PredictorParams":
        return PredictorParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2)


@dataclass
class PredictorGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float


def _zscore(field: np.ndarray, what: str) -> np.ndarray:
    mean = float(field.mean())
    sd = float(field.std())
    if sd == 0.0:
        raise ValueError(f"zero variance in {what}; features are undefined")
    return (field - mean) / sd


def _coord_grids(shape: tuple[int, int, int]) -> list[np.ndarray]:
    grids = []
    for axis, n in enumerate(shape):
        line = np.zeros(n) if n == 1 else -1.0 + 2.0 * np.arange(n) / (n - 1)
        view = [1, 1, 1]
        view[axis] = n
        grids.append(np.broadcast_to(line.reshape(view), shape).astype(np.float64))
    return grids


def extract_features(v: Volume3D, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Per-voxel feature field of shape (d, h, w, n_features)."""
    channels = [_zscore(v.data, "intensity")]
    for sigma in cfg.smooth_sigmas:
        channels.append(_zscore(smooth_field(v.data, sigma), f"smoothed intensity ({sigma})"))
    if cfg.include_coords:
        channels.extend(_coord_grids(v.data.shape))
    return np.stack(channels, axis=-1)


@dataclass
class ForwardCache:
    """Intermediate activations shared between forward and backward."""

    flat: np.ndarray  # (n_voxels, n_in)
    hidden: np.ndarray  # (n_voxels, hidden), post-tanh
    mu: np.ndarray  # (n_voxels,)
    shape: tuple[int, ...]


def forward_with_cache(params: PredictorParams, features: np.ndarray) -> ForwardCache:
    if features.shape[-1] != params.n_in:
        raise ValueError(
            f"feature count {features.shape[-1]} != parameter n_in {params.n_in}"
        )
    flat = features.reshape(-1, params.n_in)
    hidden = flat @ params.w1.T
    hidden += params.b1
    np.tanh(hidden, out=hidden)
    logits = hidden @ params.w2
    logits += params.b2
    return ForwardCache(flat=flat, hidden=hidden, mu=sigmoid(logits), shape=features.shape[:-1])


def forward(params: PredictorParams, features: np.ndarray) -> np.ndarray:
    """Probability field sigmoid(w2 . tanh(W1 x + b1) + b2), strictly in (0, 1)."""
    cache = forward_with_cache(params, features)
    return cache.mu.reshape(cache.shape)


def backward_from_cache(
    params: PredictorParams, cache: ForwardCache, d_mu: np.ndarray
) -> PredictorGrads:
    if cache.shape != d_mu.shape:
        raise ValueError(f"d_mu shape {d_mu.shape} != field shape {cache.shape}")
    mu = cache.mu
    d_logits = d_mu.reshape(-1) * mu
    d_logits *= 1.0 - mu
    g_w2 = cache.hidden.T @ d_logits
    g_b2 = float(d_logits.sum())
    d_pre = np.square(cache.hidden)
    np.subtract(1.0, d_pre, out=d_pre)
    scaled = d_logits[:, None] * params.w2[None, :]
    d_pre *= scaled
    g_w1 = d_pre.T @ cache.flat
    g_b1 = d_pre.sum(axis=0)
    return PredictorGrads(w1=g_w1, b1=g_b1, w2=g_w2, b2=g_b2)


def backward(params: PredictorParams, features: np.ndarray, d_mu: np.ndarray) -> PredictorGrads:
    """Exact chain rule through sigmoid and tanh, accumulated over voxels.

    d_mu is the upstream gradient of a scalar loss w.r.t. the forward output,
    matching the spatial shape of the feature field.
    """
    return backward_from_cache(params, forward_with_cache(params, features), d_mu)


def init_params(rng: Rng, cfg: FeatureConfig = FeatureConfig(), hidden: int = 16) -> PredictorParams:
    """Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero biases.

    Draw order: W1 entries row-major, then w2 entries.
    """
    n_in = cfg.n_features
    a1 = np.sqrt(6.0 / (n_in + hidden))
    w1 = np.array(
        [[rng.uniform_in(-a1, a1) for _ in range(n_in)] for _ in range(hidden)]
    )
    a2 = np.sqrt(6.0 / (hidden + 1))
    w2 = np.array([rng.uniform_in(-a2, a2) for _ in range(hidden)])
    return PredictorParams(w1=w1, b1=np.zeros(hidden), w2=w2, b2=0.0)


def save_params(path, params: PredictorParams) -> None:
    header = _MPRM_HEADER.pack(_MPRM_MAGIC, _MPRM_VERSION, params.n_in, params.hidden)
    payload = np.concatenate(
        [params.w1.ravel(), params.b1, params.w2, [params.b2]]
    ).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def load_params(path) -> PredictorParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _MPRM_HEADER.size:
        raise MvolError(f"{path}: truncated MPRM header")
    magic, version, n_in, hidden = _MPRM_HEADER.unpack_from(raw)
    if magic != _MPRM_MAGIC:
        raise MvolError(f"{path}: bad magic {magic!r}")
    if version != _MPRM_VERSION:
        raise MvolError(f"{path}: unsupported MPRM version {version}")
    count = hidden * n_in + hidden + hidden + 1
    expected = _MPRM_HEADER.size + 8 * count
    if len(raw) != expected:
        raise MvolError(f"{path}: payload size {len(raw)} != expected {expected}")
    flat = np.frombuffer(raw[_MPRM_HEADER.size :], dtype="<f8")
    w1 = flat[: hidden * n_in].reshape(hidden, n_in).copy()
    b1 = flat[hidden * n_in : hidden * n_in + hidden].copy()
    w2 = flat[hidden * n_in + hidden : hidden * n_in + 2 * hidden].copy()
    b2 = float(flat[-1])
    return PredictorParams(w1=w1, b1=b1, w2=w2, b2=b2)
