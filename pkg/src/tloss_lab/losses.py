"""Baseline comparison losses: MSE, MAE, BCE, CE and focal loss.

Each loss is mean-aggregated over voxels and returns both its value and the
analytic gradient w.r.t. the predicted probability field. Log-based losses
clamp mu to [1e-7, 1 - 1e-7] before evaluation; the gradient is taken at the
clamped value.

CE is evaluated on the explicit two-channel distribution (1-mu, mu) against a
one-hot target, which coincides analytically with BCE for a single sigmoid
output; it is kept as a distinct kind so ablation reports list both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tdist import TLossMode

__all__ = ["LossKind", "LOSS_NAMES", "parse_loss", "loss_value_grad", "CLAMP_EPS"]

CLAMP_EPS = 1e-7

LOSS_NAMES = ("ce", "bce", "focal", "mse", "mae", "tdist")


@dataclass(frozen=True)
class LossKind:
    """Loss selector; alpha/gamma apply to focal, mode applies to tdist."""

    name: str
    alpha: float = 0.25
    gamma: float = 2.0
    mode: TLossMode = TLossMode.PER_VOXEL

    def __post_init__(self):
        if self.name not in LOSS_NAMES:
            raise ValueError(f"unknown loss {self.name!r}; expected one of {LOSS_NAMES}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"focal alpha must lie in (0, 1), got {self.alpha!r}")
        if self.gamma < 0.0:
            raise ValueError(f"focal gamma must be >= 0, got {self.gamma!r}")

    @property
    def is_tdist(self) -> bool:
        return self.name == "tdist"


def parse_loss(
    name: str,
    alpha: float = 0.25,
    gamma: float = 2.0,
    mode: TLossMode = TLossMode.PER_VOXEL,
) -> LossKind:
    return LossKind(name=name.strip().lower(), alpha=alpha, gamma=gamma, mode=mode)


def _as_fields(k, mu) -> tuple[np.ndarray, np.ndarray]:
    k = np.asarray(getattr(k, "data", k), dtype=np.float64)
    mu = np.asarray(getattr(mu, "data", mu), dtype=np.float64)
    if k.shape != mu.shape:
        raise ValueError(f"target shape {k.shape} != prediction shape {mu.shape}")
    return k, mu


def loss_value_grad(kind: LossKind, k, mu) -> tuple[float, np.ndarray]:
    """Mean loss over voxels and d(loss)/d(mu) for the baseline losses."""
    if kind.is_tdist:
        raise ValueError("tdist loss carries parameters; use tdist.t_loss_grad")
    k, mu = _as_fields(k, mu)
    n = k.size

    if kind.name == "mse":
        delta = k - mu
        return float((delta**2).mean()), 2.0 * (mu - k) / n

    if kind.name == "mae":
        delta = k - mu
        return float(np.abs(delta).mean()), np.sign(mu - k) / n

    mu_c = np.clip(mu, CLAMP_EPS, 1.0 - CLAMP_EPS)
    log_mu = np.log(mu_c)
    log_one_minus = np.log1p(-mu_c)

    if kind.name in ("bce", "ce"):
        value = float(-(k * log_mu + (1.0 - k) * log_one_minus).mean())
        grad = (-k / mu_c + (1.0 - k) / (1.0 - mu_c)) / n
        return value, grad

    if kind.name == "focal":
        a, g = kind.alpha, kind.gamma
        pos = -a * k * (1.0 - mu_c) ** g * log_mu
        neg = -(1.0 - a) * (1.0 - k) * mu_c**g * log_one_minus
        value = float((pos + neg).mean())
        d_pos = a * k * (g * (1.0 - mu_c) ** (g - 1.0) * log_mu - (1.0 - mu_c) ** g / mu_c)
        d_neg = -(1.0 - a) * (1.0 - k) * (
            g * mu_c ** (g - 1.0) * log_one_minus - mu_c**g / (1.0 - mu_c)
        )
        return value, (d_pos + d_neg) / n

    raise ValueError(f"unknown loss {kind.name!r}")
