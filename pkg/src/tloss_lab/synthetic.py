"""Deterministic synthetic 3D benchmark data: shapes, intensities, weak labels.

Every generator draws from the package Rng in a fixed, documented order, so a
(seed, spec) pair reproduces bit-identical volumes on any platform. Datasets
persist as MVOL files under sample_%04d/ directories plus a manifest.json.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import label as cc_label

from .rng import Rng, sub_seed
from .volumes import BinaryMask, Dims, Volume3D, load_volume, save_volume, smooth_field

__all__ = [
    "ShapeSpec",
    "CorruptionSpec",
    "IntensitySpec",
    "SyntheticSample",
    "gen_shape",
    "gen_intensity",
    "morph",
    "corrupt_labels",
    "gen_dataset",
    "save_dataset",
    "load_dataset",
]

_SIX_CONN = np.array(
    [
        [[0, 0, 0], [0, 1, 0], [0, 0, 0]],
        [[0, 1, 0], [1, 1, 1], [0, 1, 0]],
        [[0, 0, 0], [0, 1, 0], [0, 0, 0]],
    ],
    dtype=np.uint8,
)


@dataclass(frozen=True)
class ShapeSpec:
    dims: Dims
    n_lobes: int = 3
    lobe_sigma_range: tuple[float, float] = (3.0, 6.0)
    threshold: float = 0.35

    def __post_init__(self):
        if self.n_lobes < 1:
            raise ValueError("n_lobes must be >= 1")
        lo, hi = self.lobe_sigma_range
        if not 0.0 < lo <= hi:
            raise ValueError(f"invalid lobe_sigma_range {self.lobe_sigma_range!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold!r}")


@dataclass(frozen=True)
class CorruptionSpec:
    boundary_flip_rate: float = 0.15
    outlier_blob_count: int = 3
    outlier_blob_radius: int = 3
    morph_radius_range: tuple[int, int] = (-1, 2)
    drop_component_prob: float = 0.15

    def __post_init__(self):
        if not 0.0 <= self.boundary_flip_rate <= 1.0:
            raise ValueError("boundary_flip_rate must lie in [0, 1]")
        if self.outlier_blob_count < 0 or self.outlier_blob_radius < 0:
            raise ValueError("blob count and radius must be >= 0")
        if self.morph_radius_range[0] > self.morph_radius_range[1]:
            raise ValueError("morph_radius_range must be (low, high)")
        if not 0.0 <= self.drop_component_prob <= 1.0:
            raise ValueError("drop_component_prob must lie in [0, 1]")

    @classmethod
    def none(cls) -> "CorruptionSpec":
        return cls(0.0, 0, 0, (0, 0), 0.0)


@dataclass(frozen=True)
class IntensitySpec:
    fg_mean: float = 1.0
    bg_mean: float = 0.0
    noise_sd: float = 0.2

    def __post_init__(self):
        if self.fg_mean == self.bg_mean:
            raise ValueError("fg_mean and bg_mean must differ")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


@dataclass
class SyntheticSample:
    intensity: Volume3D
    gt: BinaryMask
    weak: BinaryMask


def _lobe_field(rng: Rng, spec: ShapeSpec) -> np.ndarray:
    """Sum of n_lobes anisotropic Gaussian bumps.

    Draw order per lobe: center d, h, w (uniform in the middle 60% of each
    axis), then sigma d, h, w (uniform in lobe_sigma_range).
    """
    d, h, w = spec.dims.as_tuple()
    field = np.zeros((d, h, w), dtype=np.float64)
    axes = [np.arange(n, dtype=np.float64) for n in (d, h, w)]
    for _ in range(spec.n_lobes):
        centers = [rng.uniform_in(0.2 * (n - 1), 0.8 * (n - 1)) for n in (d, h, w)]
        sigmas = [rng.uniform_in(*spec.lobe_sigma_range) for _ in range(3)]
        g = [np.exp(-0.5 * ((axes[a] - centers[a]) / sigmas[a]) ** 2) for a in range(3)]
        field += g[0][:, None, None] * g[1][None, :, None] * g[2][None, None, :]
    return field


def gen_shape(rng: Rng, spec: ShapeSpec, spacing=(1.0, 1.0, 1.0)) -> BinaryMask:
    """Random blob mask: min-max normalized lobe field thresholded at iso-level.

    Redraws up to 10 times if a degenerate (flat) field produces an empty
    mask, then raises.
    """
    for _ in range(10):
        field = _lobe_field(rng, spec)
        lo, hi = float(field.min()), float(field.max())
        if hi - lo < 1e-12:
            continue
        normalized = (field - lo) / (hi - lo)
        mask = (normalized >= spec.threshold).astype(np.uint8)
        if mask.any():
            return BinaryMask(spec.dims, spacing, mask)
    raise ValueError("gen_shape: degenerate spec produced an empty mask after 10 draws")


def gen_intensity(
    rng: Rng,
    gt: BinaryMask,
    fg_mean: float = 1.0,
    bg_mean: float = 0.0,
    noise_sd: float = 0.2,
) -> Volume3D:
    """Two-level volume plus Gaussian noise, smoothed once (sigma 0.8).

    Noise normals are drawn per voxel in row-major order via Box-Muller
    (skipped entirely when noise_sd == 0). Output values are quantized to the
    float32 grid so MVOL round-trips are bit-exact.
    """
    if fg_mean == bg_mean:
        raise ValueError("fg_mean and bg_mean must differ")
    base = np.where(gt.data > 0, float(fg_mean), float(bg_mean))
    if noise_sd > 0:
        noise = np.array(rng.normals(gt.dims.count), dtype=np.float64)
        base = base + noise_sd * noise.reshape(base.shape)
    smoothed = smooth_field(base, 0.8)
    quantized = smoothed.astype(np.float32).astype(np.float64)
    return Volume3D(gt.dims, gt.spacing, quantized)


def _ball_offsets(radius: int) -> np.ndarray:
    r = int(radius)
    span = np.arange(-r, r + 1)
    dz, dy, dx = np.meshgrid(span, span, span, indexing="ij")
    keep = dz**2 + dy**2 + dx**2 <= r * r
    return np.stack([dz[keep], dy[keep], dx[keep]], axis=1)


def _shift_bool(mask: np.ndarray, offset) -> np.ndarray:
    """Shift with zero fill; out-of-bounds voxels count as background."""
    out = np.zeros_like(mask)
    src = []
    dst = []
    for o, n in zip(offset, mask.shape):
        o = int(o)
        if abs(o) >= n:
            return out
        src.append(slice(max(0, -o), n - max(0, o)))
        dst.append(slice(max(0, o), n - max(0, -o)))
    out[tuple(dst)] = mask[tuple(src)]
    return out


def morph(m: BinaryMask, radius: int) -> BinaryMask:
    """Dilate (radius > 0) or erode (radius < 0) with a Euclidean ball."""
    if abs(radius) > min(m.dims.as_tuple()) / 4:
        raise ValueError(f"|radius| {abs(radius)} exceeds min dim / 4")
    if radius == 0:
        return BinaryMask(m.dims, m.spacing, m.data.copy())
    fg = m.data.astype(bool)
    offsets = _ball_offsets(abs(radius))
    if radius > 0:
        out = np.zeros_like(fg)
        for off in offsets:
            out |= _shift_bool(fg, off)
    else:
        out = np.ones_like(fg)
        for off in offsets:
            out &= _shift_bool(fg, off)
    return BinaryMask(m.dims, m.spacing, out.astype(np.uint8))


def _surface_band(fg: np.ndarray) -> np.ndarray:
    """Voxels within Euclidean distance 1 of the surface voxel set."""
    padded = np.pad(fg, 1, mode="constant", constant_values=False)
    interior = np.ones_like(fg)
    for axis in range(3):
        sl_lo = [slice(1, 1 + n) for n in fg.shape]
        sl_hi = [slice(1, 1 + n) for n in fg.shape]
        sl_lo[axis] = slice(0, fg.shape[axis])
        sl_hi[axis] = slice(2, fg.shape[axis] + 2)
        interior &= padded[tuple(sl_lo)] & padded[tuple(sl_hi)]
    surface = fg & ~interior
    band = surface.copy()
    for axis in range(3):
        for o in (-1, 1):
            off = [0, 0, 0]
            off[axis] = o
            band |= _shift_bool(surface, off)
    return band


def corrupt_labels(rng: Rng, gt: BinaryMask, spec: CorruptionSpec) -> BinaryMask:
    """Weak-label corruption pipeline.

    Steps, in order, each drawing from rng as noted:
      1. morphology by a radius drawn uniformly from morph_radius_range
         (one integer draw, always consumed);
      2. flip every voxel within distance 1 of the current surface with
         probability boundary_flip_rate (one uniform per candidate voxel,
         lexicographic order; skipped when the rate is 0);
      3. stamp outlier_blob_count balls at centers drawn uniformly over the
         volume, rejecting up to 100 draws per blob so the ball avoids the
         bounding box of gt when possible;
      4. with drop_component_prob, delete one uniformly chosen 6-connected
         component (skipped if only one component remains, so the weak mask
         stays non-empty).

    Any step that would empty the mask is reverted.
    """
    if gt.data.max(initial=0) == 0:
        raise ValueError("corrupt_labels requires a non-empty ground-truth mask")
    current = gt.data.astype(bool)

    lo, hi = spec.morph_radius_range
    radius = lo + rng.randint(hi - lo + 1)
    if radius != 0:
        morphed = morph(BinaryMask(gt.dims, gt.spacing, current.astype(np.uint8)), radius)
        if morphed.data.any():
            current = morphed.data.astype(bool)

    if spec.boundary_flip_rate > 0.0:
        band = _surface_band(current)
        coords = np.argwhere(band)
        flipped = current.copy()
        for z, y, x in coords:
            if rng.uniform() < spec.boundary_flip_rate:
                flipped[z, y, x] = not flipped[z, y, x]
        if flipped.any():
            current = flipped

    if spec.outlier_blob_count > 0:
        d, h, w = gt.dims.as_tuple()
        gt_idx = np.argwhere(gt.data > 0)
        bbox_lo = gt_idx.min(axis=0)
        bbox_hi = gt_idx.max(axis=0)
        r = spec.outlier_blob_radius
        offsets = _ball_offsets(r)
        for _ in range(spec.outlier_blob_count):
            center = None
            for _ in range(100):
                cand = np.array([rng.randint(d), rng.randint(h), rng.randint(w)])
                if np.any(cand + r < bbox_lo) or np.any(cand - r > bbox_hi):
                    center = cand
                    break
                center = cand
            pts = center[None, :] + offsets
            keep = np.all((pts >= 0) & (pts < np.array([d, h, w])[None, :]), axis=1)
            pts = pts[keep]
            current[pts[:, 0], pts[:, 1], pts[:, 2]] = True

    if spec.drop_component_prob > 0.0 and rng.uniform() < spec.drop_component_prob:
        labels, n_comp = cc_label(current, structure=_SIX_CONN)
        if n_comp >= 2:
            victim = 1 + rng.randint(n_comp)
            current = current & (labels != victim)

    return BinaryMask(gt.dims, gt.spacing, current.astype(np.uint8))


def gen_dataset(
    seed: int,
    n: int,
    shape_spec: ShapeSpec,
    corruption_spec: CorruptionSpec,
    intensity_spec: IntensitySpec = IntensitySpec(),
    spacing=(1.0, 1.0, 1.0),
) -> list[SyntheticSample]:
    """n independent samples; sample i uses Rng(sub_seed(seed, i))."""
    if n < 1:
        raise ValueError("n must be >= 1")
    samples = []
    for i in range(n):
        rng = Rng(sub_seed(seed, i))
        gt = gen_shape(rng, shape_spec, spacing)
        intensity = gen_intensity(
            rng,
            gt,
            fg_mean=intensity_spec.fg_mean,
            bg_mean=intensity_spec.bg_mean,
            noise_sd=intensity_spec.noise_sd,
        )
        weak = corrupt_labels(rng, gt, corruption_spec)
        samples.append(SyntheticSample(intensity=intensity, gt=gt, weak=weak))
    return samples


def _manifest_dict(seed, n, shape_spec, corruption_spec, intensity_spec, spacing):
    shape = asdict(shape_spec)
    shape["dims"] = list(shape_spec.dims.as_tuple())
    shape["lobe_sigma_range"] = list(shape_spec.lobe_sigma_range)
    corruption = asdict(corruption_spec)
    corruption["morph_radius_range"] = list(corruption_spec.morph_radius_range)
    return {
        "format": "tloss-lab-dataset",
        "version": 1,
        "seed": int(seed),
        "n": int(n),
        "spacing": [float(s) for s in spacing],
        "shape_spec": shape,
        "corruption_spec": corruption,
        "intensity_spec": asdict(intensity_spec),
        "samples": [f"sample_{i:04d}" for i in range(n)],
    }


def save_dataset(
    out_dir,
    samples: list[SyntheticSample],
    seed: int,
    shape_spec: ShapeSpec,
    corruption_spec: CorruptionSpec,
    intensity_spec: IntensitySpec,
    spacing=(1.0, 1.0, 1.0),
) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for i, sample in enumerate(samples):
        sample_dir = os.path.join(out_dir, f"sample_{i:04d}")
        os.makedirs(sample_dir, exist_ok=True)
        save_volume(os.path.join(sample_dir, "intensity.mvol"), sample.intensity)
        save_volume(os.path.join(sample_dir, "gt.mvol"), sample.gt)
        save_volume(os.path.join(sample_dir, "weak.mvol"), sample.weak)
    manifest = _manifest_dict(
        seed, len(samples), shape_spec, corruption_spec, intensity_spec, spacing
    )
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(data_dir) -> tuple[list[SyntheticSample], dict]:
    manifest_path = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(f"no manifest.json in {data_dir}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    samples = []
    for name in manifest["samples"]:
        sample_dir = os.path.join(data_dir, name)
        samples.append(
            SyntheticSample(
                intensity=load_volume(os.path.join(sample_dir, "intensity.mvol"), expect="field"),
                gt=load_volume(os.path.join(sample_dir, "gt.mvol"), expect="mask"),
                weak=load_volume(os.path.join(sample_dir, "weak.mvol"), expect="mask"),
            )
        )
    return samples, manifest
