"""Student-t negative log-likelihood loss with learnable tail weight and scale.

The loss treats the residual between a binary target field k and a predicted
probability field mu as Student-t distributed with degrees of freedom r and
diagonal per-dimension variances sigma_i^2. Both r and the variances are kept
positive through softplus(raw) + epsilon reparameterization and can be trained
by gradient descent alongside the predictor.

Two aggregation modes are provided:

  PER_VOXEL     every voxel is an independent 1-dimensional Student-t;
                the loss is the arithmetic mean over voxels (default).
  MULTIVARIATE  the whole field is a single D-dimensional Student-t with
                diagonal covariance, D = voxel count.

All arithmetic is float64. Gradients are exact analytic expressions and are
validated against central finite differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .special import digamma, lgamma, sigmoid, softplus, softplus_inv

__all__ = [
    "SAFEGUARD",
    "TLossMode",
    "StudentTParams",
    "TLossGrad",
    "effective_params",
    "t_log_pdf",
    "t_loss",
    "t_loss_grad",
]

SAFEGUARD = 1e-8


class TLossMode(Enum):
    PER_VOXEL = "pervoxel"
    MULTIVARIATE = "multivariate"


@dataclass
class StudentTParams:
    """Unconstrained loss parameters.

    rho_raw yields the degrees of freedom r = softplus(rho_raw) + epsilon.
    scale_raw yields the variances sigma_i^2 = softplus(scale_raw) + epsilon;
    it is either a scalar (one shared variance) or a field matching the
    target shape (one variance per voxel).
    """

    rho_raw: float
    scale_raw: np.ndarray | float
    epsilon: float = SAFEGUARD

    @classmethod
    def init_default(cls, shape: tuple[int, ...] | None = None) -> "StudentTParams":
        """r = 1 and sigma^2 = 1 at the safeguarded softplus parameterization.

        shape=None gives a shared scalar variance, otherwise a per-voxel field.
        """
        raw = softplus_inv(1.0 - SAFEGUARD)
        scale = raw if shape is None else np.full(shape, raw, dtype=np.float64)
        return cls(rho_raw=raw, scale_raw=scale)

    @property
    def scale_is_scalar(self) -> bool:
        return not isinstance(self.scale_raw, np.ndarray)


@dataclass
class TLossGrad:
    d_mu: np.ndarray
    d_scale_raw: np.ndarray | float
    d_rho_raw: float


def effective_params(p: StudentTParams) -> tuple[float, np.ndarray | float]:
    """Map raw parameters to (r, sigma^2), both strictly positive."""
    r = softplus(p.rho_raw) + p.epsilon
    if p.scale_is_scalar:
        sigma2 = softplus(float(p.scale_raw)) + p.epsilon
    else:
        sigma2 = softplus(np.asarray(p.scale_raw, dtype=np.float64)) + p.epsilon
    return r, sigma2


def t_log_pdf(k, mu, sigma2, r: float) -> float:
    """Log density of a D-dimensional Student-t with diagonal covariance.

    k, mu, sigma2 are 1-D vectors of equal length D. Equals -t_loss on the
    same inputs in MULTIVARIATE mode.
    """
    k = np.asarray(k, dtype=np.float64).ravel()
    mu = np.asarray(mu, dtype=np.float64).ravel()
    sigma2 = np.asarray(sigma2, dtype=np.float64).ravel()
    if k.shape != mu.shape or k.shape != sigma2.shape:
        raise ValueError("k, mu and sigma2 must have identical lengths")
    if not r > 0:
        raise ValueError(f"r must be > 0, got {r!r}")
    if np.any(sigma2 <= 0):
        raise ValueError("all variances must be > 0")
    dim = k.size
    s = float(np.sum((k - mu) ** 2 / sigma2))
    return (
        -0.5 * dim * math.log(math.pi * r)
        + lgamma(0.5 * (r + dim))
        - lgamma(0.5 * r)
        - 0.5 * float(np.sum(np.log(sigma2)))
        - 0.5 * (r + dim) * math.log1p(s / r)
    )


def _as_fields(k, mu) -> tuple[np.ndarray, np.ndarray]:
    k = np.asarray(getattr(k, "data", k), dtype=np.float64)
    mu = np.asarray(getattr(mu, "data", mu), dtype=np.float64)
    if k.shape != mu.shape:
        raise ValueError(f"target shape {k.shape} != prediction shape {mu.shape}")
    return k, mu


def _effective_field(p: StudentTParams, shape: tuple[int, ...]) -> tuple[float, np.ndarray]:
    r, sigma2 = effective_params(p)
    if p.scale_is_scalar:
        return r, np.full(shape, sigma2, dtype=np.float64)
    sigma2 = np.asarray(sigma2)
    if sigma2.shape != shape:
        raise ValueError(f"scale_raw shape {sigma2.shape} != field shape {shape}")
    return r, sigma2


def t_loss(k, mu, p: StudentTParams, mode: TLossMode = TLossMode.PER_VOXEL) -> float:
    """Student-t negative log-likelihood of the residual field k - mu."""
    k, mu = _as_fields(k, mu)
    r, sigma2 = _effective_field(p, k.shape)
    delta2 = (k - mu) ** 2
    s_vox = delta2 / sigma2
    if mode is TLossMode.MULTIVARIATE:
        dim = k.size
        s = float(s_vox.sum())
        return (
            0.5 * dim * math.log(math.pi * r)
            + lgamma(0.5 * r)
            - lgamma(0.5 * (r + dim))
            + 0.5 * float(np.log(sigma2).sum())
            + 0.5 * (r + dim) * math.log1p(s / r)
        )
    const = math.log(math.pi * r) + 2.0 * (lgamma(0.5 * r) - lgamma(0.5 * (r + 1.0)))
    per_voxel = 0.5 * (const + np.log(sigma2) + (r + 1.0) * np.log1p(s_vox / r))
    return float(per_voxel.mean())


def t_loss_grad(
    k, mu, p: StudentTParams, mode: TLossMode = TLossMode.PER_VOXEL
) -> tuple[float, TLossGrad]:
    """Loss value plus exact gradients w.r.t. mu, scale_raw and rho_raw.

    With S the (per-voxel or whole-field) weighted squared residual sum and
    D the matching dimension:

      dL/dmu_i     = -(r+D) * delta_i / (sigma_i^2 * (r+S))
      dL/dsigma_i2 = 1/(2 sigma_i^2) - (r+D) delta_i^2 / (2 sigma_i^4 (r+S))
      dL/dr        = D/(2r) + psi(r/2)/2 - psi((r+D)/2)/2
                     + log1p(S/r)/2 - (r+D) S / (2r(r+S))

    followed by the softplus chain rule onto the raw parameters. PER_VOXEL
    mode averages over voxels; a scalar scale accumulates its gradient over
    voxels.
    """
    k, mu = _as_fields(k, mu)
    r, sigma2 = _effective_field(p, k.shape)
    delta = k - mu
    delta2 = delta**2
    s_vox = delta2 / sigma2
    n = k.size

    if mode is TLossMode.MULTIVARIATE:
        dim = n
        s = float(s_vox.sum())
        loss = (
            0.5 * dim * math.log(math.pi * r)
            + lgamma(0.5 * r)
            - lgamma(0.5 * (r + dim))
            + 0.5 * float(np.log(sigma2).sum())
            + 0.5 * (r + dim) * math.log1p(s / r)
        )
        denom = r + s
        d_mu = -(r + dim) * delta / (sigma2 * denom)
        d_sigma2 = 0.5 / sigma2 - (r + dim) * delta2 / (2.0 * sigma2**2 * denom)
        d_r = (
            0.5 * dim / r
            + 0.5 * digamma(0.5 * r)
            - 0.5 * digamma(0.5 * (r + dim))
            + 0.5 * math.log1p(s / r)
            - (r + dim) * s / (2.0 * r * denom)
        )
    else:
        dim = 1.0
        const = math.log(math.pi * r) + 2.0 * (lgamma(0.5 * r) - lgamma(0.5 * (r + 1.0)))
        per_voxel = 0.5 * (const + np.log(sigma2) + (r + 1.0) * np.log1p(s_vox / r))
        loss = float(per_voxel.mean())
        denom = r + s_vox
        d_mu = -(r + 1.0) * delta / (sigma2 * denom) / n
        d_sigma2 = (0.5 / sigma2 - (r + 1.0) * delta2 / (2.0 * sigma2**2 * denom)) / n
        psi_term = 0.5 * digamma(0.5 * r) - 0.5 * digamma(0.5 * (r + 1.0))
        d_r_vox = (
            0.5 / r
            + psi_term
            + 0.5 * np.log1p(s_vox / r)
            - (r + 1.0) * s_vox / (2.0 * r * denom)
        )
        d_r = float(d_r_vox.mean())

    if p.scale_is_scalar:
        d_scale_raw = float(d_sigma2.sum()) * sigmoid(float(p.scale_raw))
    else:
        d_scale_raw = d_sigma2 * sigmoid(np.asarray(p.scale_raw, dtype=np.float64))
    d_rho_raw = d_r * sigmoid(p.rho_raw)
    return loss, TLossGrad(d_mu=d_mu, d_scale_raw=d_scale_raw, d_rho_raw=d_rho_raw)
