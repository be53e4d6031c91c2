"""Aesthetic rating distribution prediction from object-level regions.

Generic features of detected object regions are aggregated through two
learned attention stages, a per-region importance weighting and a
pairwise graph attention over visual, semantic, and spatial relations,
into a 10-bucket rating distribution trained with a CDF-RMS loss.
"""

from .autodiff import (
    BatchNormState,
    ParameterStore,
    Tape,
    Tensor,
    backward,
    finite_difference_check,
)
from .config import (
    ARCHES,
    DESK_PROFILE,
    FULL_PROFILE,
    PROFILES,
    AttentionConfig,
    GraphConfig,
    ModelConfig,
    PlantConfig,
    TrainConfig,
)
from .data import (
    Batch,
    ImageRecord,
    RatingVotes,
    RegionRecord,
    collate,
    dataset_paths,
    load_dataset,
    normalize_votes,
    read_manifest,
    write_dataset,
)
from .geometry import Box, center_distance, hausdorff, iou, spatial_features
from .metrics import EvalReport, binary_accuracy, dist_mean, dist_std, emd_loss, evaluate, plcc, srcc
from .model import Model, predict_records
from .synthetic import generate_synthetic
from .training import TrainResult, lr_at_epoch, train

__version__ = "0.1.0"
