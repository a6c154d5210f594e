"""Robust Student-t segmentation loss laboratory.

A numpy implementation of the 3D T-distribution loss (Student-t negative
log-likelihood with trainable degrees of freedom and diagonal variances),
baseline losses, volumetric segmentation metrics, deterministic synthetic
weak-label benchmarks, and a small exactly-differentiable per-voxel
predictor, all tied together by the `tloss-lab` CLI and a scikit-learn
style estimator API.
"""

from .estimator import TLossFieldEstimator, TLossSegmenter
from .losses import LossKind, loss_value_grad, parse_loss
from .metrics import (
    ConfusionCounts,
    MetricError,
    SurfacePointSet,
    asd,
    confusion,
    dice,
    extract_surface,
    hd95,
    rates,
    wilcoxon_signed_rank,
)
from .predictor import FeatureConfig, PredictorParams, extract_features, forward, init_params
from .rng import Rng, sub_seed
from .synthetic import (
    CorruptionSpec,
    IntensitySpec,
    ShapeSpec,
    SyntheticSample,
    corrupt_labels,
    gen_dataset,
    gen_intensity,
    gen_shape,
    morph,
)
from .tdist import StudentTParams, TLossMode, effective_params, t_log_pdf, t_loss, t_loss_grad
from .trainer import TrainConfig, TrainReport, field_estimate, train
from .volumes import (
    BinaryMask,
    Dims,
    MvolError,
    ProbabilityMask,
    Volume3D,
    binarize,
    flip_axis,
    gaussian_smooth,
    load_volume,
    save_volume,
    swap_axes,
)

__version__ = "0.1.0"
