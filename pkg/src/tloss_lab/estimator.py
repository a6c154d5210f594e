"""scikit-learn compatible estimators wrapping the training loops.

TLossSegmenter is the volume-in, mask-out surface: fit on intensity volumes
with (weak) binary labels, predict probability or binary masks. Parameters
follow sklearn conventions (stored verbatim in __init__, validated in fit),
so get_params/set_params/clone and model-selection tooling work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .losses import parse_loss
from .metrics import dice
from .predictor import FeatureConfig, extract_features, forward
from .synthetic import SyntheticSample
from .tdist import TLossMode
from .trainer import TrainConfig, field_estimate, train
from .validation import as_mask, as_volume, check_same_dims
from .volumes import BinaryMask, ProbabilityMask, binarize

__all__ = ["TLossSegmenter", "TLossFieldEstimator"]


def _parse_mode(mode: str) -> TLossMode:
    try:
        return TLossMode(mode)
    except ValueError:
        raise ValueError(f"mode must be 'pervoxel' or 'multivariate', got {mode!r}") from None


class TLossSegmenter(BaseEstimator):
    """Per-voxel MLP segmenter trained with a selectable robust loss.

    Parameters mirror the training configuration; `loss` is one of
    "ce", "bce", "focal", "mse", "mae", "tdist".
    """

    def __init__(
        self,
        loss: str = "tdist",
        mode: str = "pervoxel",
        lr_theta: float = 1e-3,
        lr_r: float = 1e-4,
        lr_sigma: float = 1e-4,
        max_epochs: int = 600,
        patience: int = 20,
        min_delta: float = 1e-5,
        tau: float = 0.5,
        augment: bool = True,
        seed: int = 0,
        hidden: int = 16,
        smooth_sigmas: tuple[float, ...] = (1.0, 2.0),
        include_coords: bool = True,
        scale_scope: str = "voxel",
        stop_criterion: str = "tdist",
        focal_alpha: float = 0.25,
        focal_gamma: float = 2.0,
        validation_fraction: float = 0.2,
    ):
        self.loss = loss
        self.mode = mode
        self.lr_theta = lr_theta
        self.lr_r = lr_r
        self.lr_sigma = lr_sigma
        self.max_epochs = max_epochs
        self.patience = patience
        self.min_delta = min_delta
        self.tau = tau
        self.augment = augment
        self.seed = seed
        self.hidden = hidden
        self.smooth_sigmas = smooth_sigmas
        self.include_coords = include_coords
        self.scale_scope = scale_scope
        self.stop_criterion = stop_criterion
        self.focal_alpha = focal_alpha
        self.focal_gamma = focal_gamma
        self.validation_fraction = validation_fraction

    def _train_config(self) -> TrainConfig:
        kind = parse_loss(
            self.loss,
            alpha=self.focal_alpha,
            gamma=self.focal_gamma,
            mode=_parse_mode(self.mode),
        )
        return TrainConfig(
            loss=kind,
            lr_theta=self.lr_theta,
            lr_r=self.lr_r,
            lr_sigma=self.lr_sigma,
            max_epochs=self.max_epochs,
            patience=self.patience,
            min_delta=self.min_delta,
            tau=self.tau,
            augment=self.augment,
            seed=self.seed,
            scale_scope=self.scale_scope,
            stop_criterion=self.stop_criterion,
            hidden=self.hidden,
        )

    def _feature_config(self) -> FeatureConfig:
        return FeatureConfig(
            smooth_sigmas=tuple(self.smooth_sigmas), include_coords=self.include_coords
        )

    def fit(self, X, y, X_val=None, y_val=None):
        """Fit on intensity volumes X and weak binary labels y.

        When no explicit validation split is given, the trailing
        validation_fraction of (X, y) is held out for early stopping.
        """
        volumes = [as_volume(x) for x in X]
        masks = [as_mask(m, spacing=v.spacing) for m, v in zip(y, volumes)]
        if len(volumes) != len(y):
            raise ValueError("X and y must have equal length")
        check_same_dims(volumes, "intensity volumes")
        check_same_dims(masks, "label masks")
        samples = [
            SyntheticSample(intensity=v, gt=m, weak=m) for v, m in zip(volumes, masks)
        ]
        if X_val is not None:
            val_volumes = [as_volume(x) for x in X_val]
            val_masks = [as_mask(m, spacing=v.spacing) for m, v in zip(y_val, val_volumes)]
            train_samples = samples
            val_samples = [
                SyntheticSample(intensity=v, gt=m, weak=m)
                for v, m in zip(val_volumes, val_masks)
            ]
        else:
            if not 0.0 < self.validation_fraction < 1.0:
                raise ValueError("validation_fraction must lie in (0, 1)")
            n_val = max(1, round(self.validation_fraction * len(samples)))
            if n_val >= len(samples):
                raise ValueError("not enough samples to hold out a validation split")
            train_samples = samples[:-n_val]
            val_samples = samples[-n_val:]
        outcome = train(train_samples, val_samples, self._train_config(), self._feature_config())
        self.predictor_params_ = outcome.params
        self.tdist_params_ = outcome.tparams
        self.report_ = outcome.report
        self.n_epochs_ = outcome.report.stopped_epoch
        return self

    def predict_proba(self, X) -> list[ProbabilityMask]:
        check_is_fitted(self, "predictor_params_")
        out = []
        for x in X:
            v = as_volume(x)
            feats = extract_features(v, self._feature_config())
            mu = forward(self.predictor_params_, feats)
            out.append(ProbabilityMask(v.dims, v.spacing, mu))
        return out

    def predict(self, X) -> list[BinaryMask]:
        return [binarize(p, self.tau) for p in self.predict_proba(X)]

    def score(self, X, y) -> float:
        """Mean Dice of the binarized predictions against reference masks."""
        preds = self.predict(X)
        refs = [as_mask(m) for m in y]
        return float(np.mean([dice(p, g) for p, g in zip(preds, refs)]))


class TLossFieldEstimator(BaseEstimator):
    """Free per-voxel probability field fitted to a set of noisy label masks."""

    def __init__(
        self,
        loss: str = "tdist",
        mode: str = "pervoxel",
        steps: int = 500,
        lr: float = 0.05,
        lr_r: float = 1e-4,
        lr_sigma: float = 1e-4,
        scale_scope: str = "scalar",
        tau: float = 0.5,
        focal_alpha: float = 0.25,
        focal_gamma: float = 2.0,
    ):
        self.loss = loss
        self.mode = mode
        self.steps = steps
        self.lr = lr
        self.lr_r = lr_r
        self.lr_sigma = lr_sigma
        self.scale_scope = scale_scope
        self.tau = tau
        self.focal_alpha = focal_alpha
        self.focal_gamma = focal_gamma

    def fit(self, X, y=None):
        """X is the list of noisy label masks for a single target field."""
        masks = [as_mask(m) for m in X]
        check_same_dims(masks, "label masks")
        kind = parse_loss(
            self.loss,
            alpha=self.focal_alpha,
            gamma=self.focal_gamma,
            mode=_parse_mode(self.mode),
        )
        self.proba_ = field_estimate(
            masks,
            kind,
            steps=self.steps,
            lr=self.lr,
            scale_scope=self.scale_scope,
            lr_r=self.lr_r,
            lr_sigma=self.lr_sigma,
        )
        self.mask_ = binarize(self.proba_, self.tau)
        return self
