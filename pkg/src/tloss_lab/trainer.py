"""Deterministic training loops: Adam updates, augmentation, early stopping.

A training run is a pure function of (splits, config): the single Rng seeded
from the config drives parameter init, epoch shuffles and augmentation draws
in a fixed order, and all gradient accumulation happens in fixed row-major
order, so identical inputs reproduce bit-identical reports.

Early stopping always monitors the Student-t validation loss (for losses that
do not train r and sigma^2, the default-initialized values r=1, sigma^2=1 are
used); `stop_criterion="own"` switches to the trained loss's own validation
value instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .losses import LossKind, loss_value_grad
from .predictor import (
    FeatureConfig,
    PredictorParams,
    backward_from_cache,
    extract_features,
    forward,
    forward_with_cache,
    init_params,
)
from .rng import Rng
from .special import sigmoid, softplus_inv
from .tdist import SAFEGUARD, StudentTParams, effective_params, t_loss, t_loss_grad
from .volumes import BinaryMask, Dims, ProbabilityMask

__all__ = [
    "ADAM_BETA1",
    "ADAM_BETA2",
    "ADAM_EPS",
    "TrainConfig",
    "AdamState",
    "TrainReport",
    "TrainOutcome",
    "adam_init",
    "adam_step",
    "train",
    "field_estimate",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    loss: LossKind = field(default_factory=lambda: LossKind("tdist"))
    lr_theta: float = 1e-3
    lr_r: float = 1e-4
    lr_sigma: float = 1e-4
    max_epochs: int = 600
    patience: int = 20
    min_delta: float = 1e-5
    tau: float = 0.5
    augment: bool = True
    seed: int = 0
    scale_scope: str = "voxel"  # "voxel" or "scalar"
    stop_criterion: str = "tdist"  # "tdist" or "own"
    hidden: int = 16

    def __post_init__(self):
        if min(self.lr_theta, self.lr_r, self.lr_sigma) <= 0:
            raise ValueError("learning rates must be > 0")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be >= 1")
        if self.scale_scope not in ("voxel", "scalar"):
            raise ValueError(f"scale_scope must be 'voxel' or 'scalar', got {self.scale_scope!r}")
        if self.stop_criterion not in ("tdist", "own"):
            raise ValueError(f"stop_criterion must be 'tdist' or 'own', got {self.stop_criterion!r}")

    def echo(self) -> dict:
        return {
            "loss": self.loss.name,
            "focal_alpha": self.loss.alpha,
            "focal_gamma": self.loss.gamma,
            "mode": self.loss.mode.value,
            "lr_theta": self.lr_theta,
            "lr_r": self.lr_r,
            "lr_sigma": self.lr_sigma,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "min_delta": self.min_delta,
            "tau": self.tau,
            "augment": self.augment,
            "seed": self.seed,
            "scale_scope": self.scale_scope,
            "stop_criterion": self.stop_criterion,
            "hidden": self.hidden,
            "r_init": 1.0,
            "sigma2_init": 1.0,
            "safeguard": SAFEGUARD,
        }


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def adam_init(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
    )


def adam_step(
    state: AdamState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
    group: str = "params",
) -> None:
    """One bias-corrected Adam update; rebinds the entries of the params dict."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    for key, g in grads.items():
        g = np.asarray(g, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise RuntimeError(f"non-finite gradient in group '{group}' ({key})")
        state.m[key] = ADAM_BETA1 * state.m[key] + (1.0 - ADAM_BETA1) * g
        state.v[key] = ADAM_BETA2 * state.v[key] + (1.0 - ADAM_BETA2) * g**2
        m_hat = state.m[key] / bc1
        v_hat = state.v[key] / bc2
        params[key] = params[key] - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


@dataclass
class TrainReport:
    config: dict
    train_loss: list[float]
    val_tdist: list[float]
    val_stop: list[float]
    stopped_epoch: int
    best_epoch: int
    best_val: float
    final_r: float
    final_sigma2: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "train_loss": self.train_loss,
            "val_tdist": self.val_tdist,
            "val_stop": self.val_stop,
            "stopped_epoch": self.stopped_epoch,
            "best_epoch": self.best_epoch,
            "best_val": self.best_val,
            "final_r": self.final_r,
            "final_sigma2": self.final_sigma2,
        }


@dataclass
class TrainOutcome:
    report: TrainReport
    params: PredictorParams
    tparams: StudentTParams


def _augment_draws(rng: Rng, dims: tuple[int, int, int]):
    """Per-sample augmentation: independent axis flips, then an optional swap.

    Draws: three uniforms (flip each axis at p=1/2), one uniform (swap at
    p=1/2, only offered when some axis pair has equal sizes), and one index
    draw when the swap happens. Swaps of unequal axes are never drawn so
    feature and scale fields keep their shape.
    """
    flips = tuple(rng.uniform() < 0.5 for _ in range(3))
    pairs = [(a, b) for a, b in ((0, 1), (0, 2), (1, 2)) if dims[a] == dims[b]]
    swap = None
    if pairs and rng.uniform() < 0.5:
        swap = pairs[rng.randint(len(pairs))]
    return flips, swap


def _augment_spatial(data: np.ndarray, flips, swap) -> np.ndarray:
    out = data
    for axis in range(3):
        if flips[axis]:
            out = np.flip(out, axis=axis)
    if swap is not None:
        out = np.swapaxes(out, swap[0], swap[1])
    return np.ascontiguousarray(out)


def augment_features(feats: np.ndarray, flips, swap, cfg: FeatureConfig) -> np.ndarray:
    """Augment a cached (d, h, w, F) feature field as the volume would be.

    Flips and swaps commute with the smoothing (symmetric kernel, replicated
    border) and with volume-level z-scoring, so only the coordinate channels
    need fixing: a flipped axis negates its channel, a swap exchanges the two
    channels. Matches extract_features of the augmented volume up to float
    summation-order round-off (~1e-15).
    """
    out = feats
    for axis in range(3):
        if flips[axis]:
            out = np.flip(out, axis=axis)
    if swap is not None:
        out = np.swapaxes(out, swap[0], swap[1])
    out = np.ascontiguousarray(out)
    if cfg.include_coords:
        base = 1 + len(cfg.smooth_sigmas)
        for axis in range(3):
            if flips[axis]:
                out[..., base + axis] = -out[..., base + axis]
        if swap is not None:
            a, b = base + swap[0], base + swap[1]
            tmp = out[..., a].copy()
            out[..., a] = out[..., b]
            out[..., b] = tmp
    return out


def _init_raw_scale(scope: str, shape: tuple[int, ...]) -> np.ndarray:
    raw = softplus_inv(1.0 - SAFEGUARD)
    if scope == "scalar":
        return np.array(raw, dtype=np.float64)
    return np.full(shape, raw, dtype=np.float64)


def _tparams_view(rho: np.ndarray, scale: np.ndarray) -> StudentTParams:
    scale_val = float(scale) if scale.ndim == 0 else scale
    return StudentTParams(rho_raw=float(rho), scale_raw=scale_val)


def _theta_view(theta: dict[str, np.ndarray]) -> PredictorParams:
    return PredictorParams(
        w1=theta["w1"], b1=theta["b1"], w2=theta["w2"], b2=float(theta["b2"])
    )


def _sigma2_stats(tparams: StudentTParams) -> dict:
    _, sigma2 = effective_params(tparams)
    arr = np.atleast_1d(np.asarray(sigma2, dtype=np.float64))
    return {"min": float(arr.min()), "mean": float(arr.mean()), "max": float(arr.max())}


def train(
    train_samples,
    val_samples,
    cfg: TrainConfig,
    feature_cfg: FeatureConfig = FeatureConfig(),
) -> TrainOutcome:
    """Optimize the per-voxel predictor on weak labels with early stopping.

    One optimizer step per volume; epoch order is a seeded shuffle; flip/swap
    augmentation is applied identically to features and weak labels. Returns
    the best-validation snapshot of all trained parameters plus the report.
    """
    if not train_samples or not val_samples:
        raise ValueError("train and validation splits must be non-empty")
    dims = train_samples[0].intensity.dims.as_tuple()
    for s in list(train_samples) + list(val_samples):
        if s.intensity.dims.as_tuple() != dims:
            raise ValueError("all samples must share dims")

    rng = Rng(cfg.seed)
    params0 = init_params(rng, feature_cfg, cfg.hidden)
    theta = {
        "w1": params0.w1,
        "b1": params0.b1,
        "w2": params0.w2,
        "b2": np.array(params0.b2, dtype=np.float64),
    }
    tpar = {
        "rho": np.array(softplus_inv(1.0 - SAFEGUARD), dtype=np.float64),
        "scale": _init_raw_scale(cfg.scale_scope, dims),
    }
    theta_state = adam_init(theta)
    r_state = adam_init({"rho": tpar["rho"]})
    s_state = adam_init({"scale": tpar["scale"]})

    feats_train = [extract_features(s.intensity, feature_cfg) for s in train_samples]
    weak_train = [s.weak.data.astype(np.float64) for s in train_samples]
    feats_val = [extract_features(s.intensity, feature_cfg) for s in val_samples]
    weak_val = [s.weak.data.astype(np.float64) for s in val_samples]

    is_tdist = cfg.loss.is_tdist
    mode = cfg.loss.mode
    default_tparams = StudentTParams.init_default()

    train_hist: list[float] = []
    val_tdist_hist: list[float] = []
    val_stop_hist: list[float] = []
    best_val = math.inf
    best_epoch = 0
    best_theta = {k: v.copy() for k, v in theta.items()}
    best_tpar = {k: v.copy() for k, v in tpar.items()}
    bad_epochs = 0
    stopped_epoch = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = list(range(len(train_samples)))
        rng.shuffle(order)
        epoch_losses = []
        for idx in order:
            feats = feats_train[idx]
            k = weak_train[idx]
            if cfg.augment:
                flips, swap = _augment_draws(rng, dims)
                feats = augment_features(feats, flips, swap, feature_cfg)
                k = _augment_spatial(k, flips, swap)
            params_view = _theta_view(theta)
            cache = forward_with_cache(params_view, feats)
            mu = cache.mu.reshape(cache.shape)
            if is_tdist:
                loss, tgrad = t_loss_grad(k, mu, _tparams_view(tpar["rho"], tpar["scale"]), mode)
                d_mu = tgrad.d_mu
            else:
                loss, d_mu = loss_value_grad(cfg.loss, k, mu)
            if not math.isfinite(loss):
                raise RuntimeError(f"non-finite loss {loss!r} at epoch {epoch}, sample {idx}")
            g = backward_from_cache(params_view, cache, d_mu)
            adam_step(
                theta_state,
                theta,
                {"w1": g.w1, "b1": g.b1, "w2": g.w2, "b2": np.array(g.b2)},
                cfg.lr_theta,
                "theta",
            )
            if is_tdist:
                adam_step(r_state, tpar, {"rho": np.array(tgrad.d_rho_raw)}, cfg.lr_r, "r")
                adam_step(
                    s_state,
                    tpar,
                    {"scale": np.asarray(tgrad.d_scale_raw, dtype=np.float64)},
                    cfg.lr_sigma,
                    "sigma2",
                )
            epoch_losses.append(loss)
        train_hist.append(float(np.mean(epoch_losses)))

        params_view = _theta_view(theta)
        current_t = _tparams_view(tpar["rho"], tpar["scale"]) if is_tdist else default_tparams
        vals_tdist = []
        vals_own = []
        for feats, k in zip(feats_val, weak_val):
            mu = forward(params_view, feats)
            vals_tdist.append(t_loss(k, mu, current_t, mode))
            if cfg.stop_criterion == "own" and not is_tdist:
                vals_own.append(loss_value_grad(cfg.loss, k, mu)[0])
        val_tdist = float(np.mean(vals_tdist))
        val_stop = float(np.mean(vals_own)) if vals_own else val_tdist
        val_tdist_hist.append(val_tdist)
        val_stop_hist.append(val_stop)
        stopped_epoch = epoch

        significant = epoch == 1 or (best_val - val_stop) > cfg.min_delta
        if val_stop < best_val:
            best_val = val_stop
            best_epoch = epoch
            best_theta = {k2: v2.copy() for k2, v2 in theta.items()}
            best_tpar = {k2: v2.copy() for k2, v2 in tpar.items()}
        if significant:
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break

    final_t = _tparams_view(best_tpar["rho"], best_tpar["scale"])
    r_eff, _ = effective_params(final_t)
    report = TrainReport(
        config=cfg.echo(),
        train_loss=train_hist,
        val_tdist=val_tdist_hist,
        val_stop=val_stop_hist,
        stopped_epoch=stopped_epoch,
        best_epoch=best_epoch,
        best_val=best_val,
        final_r=float(r_eff),
        final_sigma2=_sigma2_stats(final_t),
    )
    return TrainOutcome(report=report, params=_theta_view(best_theta), tparams=final_t)


def field_estimate(
    noisy_labels,
    loss: LossKind,
    steps: int = 500,
    lr: float = 0.05,
    scale_scope: str = "scalar",
    lr_r: float = 1e-4,
    lr_sigma: float = 1e-4,
) -> ProbabilityMask:
    """Directly optimize a free per-voxel logit field against noisy labels.

    mu = sigmoid(logits), logits initialized to 0; Adam minimizes the mean
    loss over the label set. For the Student-t loss, r and sigma^2 are
    co-trained with their own learning rates.
    """
    if not noisy_labels:
        raise ValueError("need at least one label volume")
    arrays = []
    spacing = (1.0, 1.0, 1.0)
    for m in noisy_labels:
        if isinstance(m, BinaryMask):
            spacing = m.spacing
            arrays.append(m.data.astype(np.float64))
        else:
            arrays.append(np.asarray(m, dtype=np.float64))
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ValueError("all label volumes must share dims")
    n_labels = len(arrays)

    logits = {"z": np.zeros(shape, dtype=np.float64)}
    z_state = adam_init(logits)
    is_tdist = loss.is_tdist
    tpar = {
        "rho": np.array(softplus_inv(1.0 - SAFEGUARD), dtype=np.float64),
        "scale": _init_raw_scale(scale_scope, shape),
    }
    r_state = adam_init({"rho": tpar["rho"]})
    s_state = adam_init({"scale": tpar["scale"]})

    for step in range(1, steps + 1):
        mu = sigmoid(logits["z"])
        d_mu = np.zeros(shape, dtype=np.float64)
        d_rho = 0.0
        d_scale = np.zeros_like(tpar["scale"])
        total = 0.0
        for k in arrays:
            if is_tdist:
                value, tgrad = t_loss_grad(k, mu, _tparams_view(tpar["rho"], tpar["scale"]), loss.mode)
                d_mu += tgrad.d_mu / n_labels
                d_rho += tgrad.d_rho_raw / n_labels
                d_scale = d_scale + np.asarray(tgrad.d_scale_raw) / n_labels
            else:
                value, g = loss_value_grad(loss, k, mu)
                d_mu += g / n_labels
            total += value / n_labels
        if not math.isfinite(total):
            raise RuntimeError(f"non-finite loss {total!r} at step {step}")
        d_logits = d_mu * mu * (1.0 - mu)
        adam_step(z_state, logits, {"z": d_logits}, lr, "logits")
        if is_tdist:
            adam_step(r_state, tpar, {"rho": np.array(d_rho)}, lr_r, "r")
            adam_step(s_state, tpar, {"scale": d_scale}, lr_sigma, "sigma2")

    mu = sigmoid(logits["z"])
    return ProbabilityMask(Dims(*shape), spacing, mu)
