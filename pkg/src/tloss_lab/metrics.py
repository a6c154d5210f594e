"""Volumetric segmentation metrics and the Wilcoxon signed-rank test.

Overlap metrics (Dice, IoU, accuracy, precision, sensitivity, specificity)
come from voxelwise confusion counts. Surface metrics (HD95, ASD) operate on
6-connectivity boundary point sets with voxel-center distances scaled by the
per-axis spacing. Undefined values (empty masks, zero denominators) raise
MetricError rather than returning sentinels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .volumes import BinaryMask

__all__ = [
    "MetricError",
    "ConfusionCounts",
    "Rates",
    "SurfacePointSet",
    "MetricRow",
    "confusion",
    "dice",
    "rates",
    "extract_surface",
    "hd95",
    "asd",
    "wilcoxon_signed_rank",
]

METRIC_NAMES = ("dice", "iou", "acc", "pre", "sen", "spe", "hd95", "asd")


class MetricError(ValueError):
    """Raised when a metric is undefined for the given inputs."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


class Rates(NamedTuple):
    iou: float
    acc: float
    pre: float
    sen: float
    spe: float


@dataclass(frozen=True)
class SurfacePointSet:
    """Boundary voxel coordinates (n, 3) in lexicographic order."""

    points: np.ndarray
    spacing: tuple[float, float, float]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class MetricRow:
    """One evaluation row; entries are None when the metric was undefined."""

    dice: float | None = None
    iou: float | None = None
    acc: float | None = None
    pre: float | None = None
    sen: float | None = None
    spe: float | None = None
    hd95: float | None = None
    asd: float | None = None


def _check_same_dims(a: BinaryMask, b: BinaryMask) -> None:
    if a.dims != b.dims:
        raise MetricError(f"mask dims differ: {a.dims.as_tuple()} vs {b.dims.as_tuple()}")


def confusion(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    _check_same_dims(pred, gt)
    p = pred.data.astype(bool)
    g = gt.data.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(np.count_nonzero(~p & ~g))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def dice(pred: BinaryMask, gt: BinaryMask) -> float:
    """2*TP / (2*TP + FP + FN); undefined when both masks are empty."""
    c = confusion(pred, gt)
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        raise MetricError("dice undefined: both masks are empty")
    return 2.0 * c.tp / denom


def rates(c: ConfusionCounts) -> Rates:
    """IoU, accuracy, precision, sensitivity, specificity from counts."""
    pairs = (
        ("iou", c.tp, c.tp + c.fp + c.fn),
        ("acc", c.tp + c.tn, c.total),
        ("pre", c.tp, c.tp + c.fp),
        ("sen", c.tp, c.tp + c.fn),
        ("spe", c.tn, c.tn + c.fp),
    )
    values = []
    for name, num, den in pairs:
        if den == 0:
            raise MetricError(f"{name} undefined: zero denominator")
        values.append(num / den)
    return Rates(*values)


def extract_surface(m: BinaryMask) -> SurfacePointSet:
    """Foreground voxels with at least one 6-connected background neighbor.

    Voxels outside the volume count as background, so foreground touching the
    volume border is surface.
    """
    fg = m.data.astype(bool)
    padded = np.pad(fg, 1, mode="constant", constant_values=False)
    interior = np.ones_like(fg)
    for axis in range(3):
        lo = np.take(padded, range(0, fg.shape[axis]), axis=axis)
        hi = np.take(padded, range(2, fg.shape[axis] + 2), axis=axis)
        sl = [slice(1, 1 + n) for n in fg.shape]
        sl[axis] = slice(None)
        interior &= lo[tuple(sl)] & hi[tuple(sl)]
    surface = fg & ~interior
    points = np.argwhere(surface)  # argwhere is lexicographic for C-order input
    return SurfacePointSet(points=points.astype(np.int64), spacing=m.spacing)


def _directed_min_dists(src: SurfacePointSet, dst: SurfacePointSet) -> np.ndarray:
    """Min Euclidean distance from every src point to the dst set."""
    scale = np.asarray(src.spacing, dtype=np.float64)
    a = src.points.astype(np.float64) * scale
    b = dst.points.astype(np.float64) * scale
    out = np.empty(len(a), dtype=np.float64)
    chunk = max(1, int(2_000_000 // max(1, len(b))))
    for start in range(0, len(a), chunk):
        block = a[start : start + chunk]
        d2 = ((block[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        out[start : start + chunk] = np.sqrt(d2.min(axis=1))
    return out


def _surfaces_for_pair(a: BinaryMask, b: BinaryMask) -> tuple[SurfacePointSet, SurfacePointSet]:
    _check_same_dims(a, b)
    if a.spacing != b.spacing:
        raise MetricError(f"mask spacings differ: {a.spacing} vs {b.spacing}")
    if a.data.max(initial=0) == 0 or b.data.max(initial=0) == 0:
        raise MetricError("surface distance undefined: empty mask")
    return extract_surface(a), extract_surface(b)


def percentile_nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    """Nearest-rank percentile: k = ceil(q * n), 1-indexed on sorted input."""
    n = len(sorted_values)
    k = max(1, math.ceil(q * n))
    return float(sorted_values[k - 1])


def hd95(a: BinaryMask, b: BinaryMask) -> float:
    """Max of the two directed 95th-percentile surface distances."""
    sa, sb = _surfaces_for_pair(a, b)
    d_ab = np.sort(_directed_min_dists(sa, sb))
    d_ba = np.sort(_directed_min_dists(sb, sa))
    return max(percentile_nearest_rank(d_ab, 0.95), percentile_nearest_rank(d_ba, 0.95))


def asd(a: BinaryMask, b: BinaryMask) -> float:
    """Symmetric average surface distance (mean of the two directed means)."""
    sa, sb = _surfaces_for_pair(a, b)
    return 0.5 * (
        float(_directed_min_dists(sa, sb).mean())
        + float(_directed_min_dists(sb, sa).mean())
    )


def _exact_signed_rank_p(doubled_ranks: list[int], w_plus_doubled: int) -> float:
    """Exact two-sided p over all 2^n sign assignments of the given ranks.

    Counts, for W+ expressed in doubled (integer) rank units, how many sign
    patterns reach a value at least as extreme as the observed one on either
    tail. Tie-averaged ranks are half-integers, hence the doubling.
    """
    total = sum(doubled_ranks)
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for dr in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[dr:] = counts[: total + 1 - dr]
        counts = counts + shifted
    lo = min(w_plus_doubled, total - w_plus_doubled)
    p = (counts[: lo + 1].sum() + counts[total - lo :].sum()) / 2.0 ** len(doubled_ranks)
    return min(1.0, float(p))


def _rank_with_ties(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their mean rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(x, y) -> tuple[float, float]:
    """Paired two-sided Wilcoxon signed-rank test.

    Zero differences are dropped; at least 5 nonzero differences are
    required. Ties in |difference| receive average ranks. For n <= 20 the
    p-value is exact via full sign enumeration over the observed rank
    multiset; beyond that, a normal approximation with tie correction and
    0.5 continuity correction is used. Returns (min(W+, W-), p).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D sequences of equal length")
    diff = x - y
    diff = diff[diff != 0.0]
    n = len(diff)
    if n < 5:
        raise MetricError(f"need >= 5 nonzero differences, got {n}")
    ranks = _rank_with_ties(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())
    w_total = float(ranks.sum())
    w_minus = w_total - w_plus
    w_stat = min(w_plus, w_minus)

    if n <= 20:
        doubled = [int(round(2.0 * r)) for r in ranks]
        p = _exact_signed_rank_p(doubled, int(round(2.0 * w_plus)))
        return w_stat, p

    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(diff), return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts)).sum()) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    if var <= 0:
        raise MetricError("degenerate variance: all differences tied")
    z_num = w_plus - mean
    z_num -= 0.5 * math.copysign(1.0, z_num) if z_num != 0 else 0.0
    z = z_num / math.sqrt(var)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return w_stat, min(1.0, max(p, 0.0))
