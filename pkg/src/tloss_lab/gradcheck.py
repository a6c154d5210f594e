"""Finite-difference verification of every analytic gradient in the package.

Each component draws seeded random configurations and compares its analytic
gradient against central finite differences (default h = 1e-5) using relative
error |analytic - fd| / max(1, |analytic|). The `corrupt` argument flips the
sign of one component's analytic gradient so the harness itself can be shown
to catch wrong gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .losses import LOSS_NAMES, LossKind, loss_value_grad
from .predictor import FeatureConfig, PredictorParams, backward, forward, init_params
from .rng import Rng
from .special import softplus_inv
from .tdist import SAFEGUARD, StudentTParams, TLossMode, t_loss, t_loss_grad

__all__ = ["GradCheckReport", "run_gradcheck", "TOLERANCE"]

TOLERANCE = 1e-6
_SHAPE = (2, 3, 2)


@dataclass
class GradCheckReport:
    tolerance: float
    trials: int
    max_errors: dict[str, float]

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.max_errors.values())

    @property
    def worst(self) -> float:
        return max(self.max_errors.values())

    def failing_components(self) -> list[str]:
        return [k for k, e in self.max_errors.items() if e > self.tolerance]


def _rel(analytic: float, fd: float) -> float:
    return abs(analytic - fd) / max(1.0, abs(analytic))


def _random_field(rng: Rng, shape, lo: float, hi: float) -> np.ndarray:
    n = int(np.prod(shape))
    return np.array([rng.uniform_in(lo, hi) for _ in range(n)]).reshape(shape)


def _random_bits(rng: Rng, shape) -> np.ndarray:
    n = int(np.prod(shape))
    return np.array([float(rng.randint(2)) for _ in range(n)]).reshape(shape)


def _log_uniform(rng: Rng, lo: float, hi: float) -> float:
    return math.exp(rng.uniform_in(math.log(lo), math.log(hi)))


def _check_tdist(rng: Rng, trials: int, h: float, flip: bool) -> float:
    worst = 0.0
    sign = -1.0 if flip else 1.0
    for trial in range(trials):
        mode = TLossMode.PER_VOXEL if trial % 2 == 0 else TLossMode.MULTIVARIATE
        scalar_scope = trial % 4 >= 2
        k = _random_bits(rng, _SHAPE)
        mu = _random_field(rng, _SHAPE, 0.02, 0.98)
        r = _log_uniform(rng, 0.5, 100.0)
        rho_raw = softplus_inv(r - SAFEGUARD)
        if scalar_scope:
            scale_raw = softplus_inv(_log_uniform(rng, 0.01, 10.0) - SAFEGUARD)
        else:
            scale_raw = softplus_inv(_random_field(rng, _SHAPE, 0.01, 10.0) - SAFEGUARD)
        params = StudentTParams(rho_raw=rho_raw, scale_raw=scale_raw)
        _, grad = t_loss_grad(k, mu, params, mode)

        for idx in np.ndindex(_SHAPE):
            mu_p, mu_m = mu.copy(), mu.copy()
            mu_p[idx] += h
            mu_m[idx] -= h
            fd = (t_loss(k, mu_p, params, mode) - t_loss(k, mu_m, params, mode)) / (2 * h)
            worst = max(worst, _rel(sign * grad.d_mu[idx], fd))

        if scalar_scope:
            p_p = StudentTParams(rho_raw, scale_raw + h)
            p_m = StudentTParams(rho_raw, scale_raw - h)
            fd = (t_loss(k, mu, p_p, mode) - t_loss(k, mu, p_m, mode)) / (2 * h)
            worst = max(worst, _rel(sign * grad.d_scale_raw, fd))
        else:
            for idx in np.ndindex(_SHAPE):
                s_p, s_m = scale_raw.copy(), scale_raw.copy()
                s_p[idx] += h
                s_m[idx] -= h
                fd = (
                    t_loss(k, mu, StudentTParams(rho_raw, s_p), mode)
                    - t_loss(k, mu, StudentTParams(rho_raw, s_m), mode)
                ) / (2 * h)
                worst = max(worst, _rel(sign * grad.d_scale_raw[idx], fd))

        fd = (
            t_loss(k, mu, StudentTParams(rho_raw + h, scale_raw), mode)
            - t_loss(k, mu, StudentTParams(rho_raw - h, scale_raw), mode)
        ) / (2 * h)
        worst = max(worst, _rel(sign * grad.d_rho_raw, fd))
    return worst


def _check_baseline(rng: Rng, kind: LossKind, trials: int, h: float, flip: bool) -> float:
    worst = 0.0
    sign = -1.0 if flip else 1.0
    for _ in range(trials):
        k = _random_bits(rng, _SHAPE)
        mu = _random_field(rng, _SHAPE, 0.01, 0.99)
        _, grad = loss_value_grad(kind, k, mu)
        for idx in np.ndindex(_SHAPE):
            mu_p, mu_m = mu.copy(), mu.copy()
            mu_p[idx] += h
            mu_m[idx] -= h
            fd = (loss_value_grad(kind, k, mu_p)[0] - loss_value_grad(kind, k, mu_m)[0]) / (2 * h)
            worst = max(worst, _rel(sign * grad[idx], fd))
    return worst


def _param_coords(params: PredictorParams):
    for idx in np.ndindex(params.w1.shape):
        yield ("w1", idx)
    for i in range(params.b1.size):
        yield ("b1", (i,))
    for i in range(params.w2.size):
        yield ("w2", (i,))
    yield ("b2", None)


def _perturbed(params: PredictorParams, name: str, idx, delta: float) -> PredictorParams:
    p = params.copy()
    if name == "b2":
        p.b2 += delta
    else:
        getattr(p, name)[idx] += delta
    return p


def _check_predictor(rng: Rng, trials: int, h: float, flip: bool) -> float:
    """Backward pass vs finite differences of J = sum(c * forward)."""
    worst = 0.0
    sign = -1.0 if flip else 1.0
    cfg = FeatureConfig()
    hidden = 5
    for _ in range(trials):
        params = init_params(rng, cfg, hidden=hidden)
        feats = _random_field(rng, _SHAPE + (cfg.n_features,), -2.0, 2.0)
        upstream = _random_field(rng, _SHAPE, -1.0, 1.0)
        grads = backward(params, feats, upstream)
        for name, idx in _param_coords(params):
            j_p = float((upstream * forward(_perturbed(params, name, idx, h), feats)).sum())
            j_m = float((upstream * forward(_perturbed(params, name, idx, -h), feats)).sum())
            fd = (j_p - j_m) / (2 * h)
            analytic = grads.b2 if name == "b2" else getattr(grads, name)[idx]
            worst = max(worst, _rel(sign * analytic, fd))
    return worst


def _check_end_to_end(rng: Rng, kind: LossKind, trials: int, h: float, flip: bool) -> float:
    """Loss -> predictor chain vs finite differences w.r.t. the MLP parameters."""
    worst = 0.0
    sign = -1.0 if flip else 1.0
    cfg = FeatureConfig()
    hidden = 4
    tparams = StudentTParams.init_default()

    def objective(params, feats, k):
        mu = forward(params, feats)
        if kind.is_tdist:
            return t_loss(k, mu, tparams, kind.mode)
        return loss_value_grad(kind, k, mu)[0]

    for _ in range(trials):
        params = init_params(rng, cfg, hidden=hidden)
        feats = _random_field(rng, _SHAPE + (cfg.n_features,), -2.0, 2.0)
        k = _random_bits(rng, _SHAPE)
        mu = forward(params, feats)
        if kind.is_tdist:
            _, tgrad = t_loss_grad(k, mu, tparams, kind.mode)
            d_mu = tgrad.d_mu
        else:
            _, d_mu = loss_value_grad(kind, k, mu)
        grads = backward(params, feats, d_mu)
        for name, idx in _param_coords(params):
            j_p = objective(_perturbed(params, name, idx, h), feats, k)
            j_m = objective(_perturbed(params, name, idx, -h), feats, k)
            fd = (j_p - j_m) / (2 * h)
            analytic = grads.b2 if name == "b2" else getattr(grads, name)[idx]
            worst = max(worst, _rel(sign * analytic, fd))
    return worst


def run_gradcheck(
    trials: int = 120,
    seed: int = 0,
    h: float = 1e-5,
    corrupt: str | None = None,
) -> GradCheckReport:
    """Run every gradient suite; `corrupt` names a component to sign-flip."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    errors: dict[str, float] = {}
    rng = Rng(seed)
    errors["tdist"] = _check_tdist(rng, trials, h, corrupt == "tdist")
    for name in LOSS_NAMES:
        if name == "tdist":
            continue
        comp = f"baseline:{name}"
        errors[comp] = _check_baseline(rng, LossKind(name), trials, h, corrupt == comp)
    errors["predictor"] = _check_predictor(rng, trials, h, corrupt == "predictor")
    e2e_trials = max(3, trials // 20)
    for name in LOSS_NAMES:
        comp = f"end_to_end:{name}"
        errors[comp] = _check_end_to_end(rng, LossKind(name), e2e_trials, h, corrupt == comp)
    return GradCheckReport(tolerance=TOLERANCE, trials=trials, max_errors=errors)
