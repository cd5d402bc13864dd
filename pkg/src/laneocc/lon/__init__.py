"""LaneOccupancyNet: feature construction, the fusion network, training,
and the binary model / dataset formats."""

from .config import (
    ACTOR_FEATURE_DIM,
    PATH_FEATURE_DIM,
    LonConfig,
    desk_preset,
    paper_preset,
)
from .features import (
    FeatureBundle,
    actor_features,
    build_bundle,
    build_raster,
    path_features,
)
from .io import LonDataset, load_model, save_model
from .net import (
    LonModel,
    init_model,
    lon_forward,
    lon_forward_batch,
    lon_loss,
    zero_model,
)
from .train import learning_rate_at, lon_train

__all__ = [
    "ACTOR_FEATURE_DIM",
    "PATH_FEATURE_DIM",
    "FeatureBundle",
    "LonConfig",
    "LonDataset",
    "LonModel",
    "actor_features",
    "build_bundle",
    "build_raster",
    "desk_preset",
    "init_model",
    "learning_rate_at",
    "load_model",
    "lon_forward",
    "lon_forward_batch",
    "lon_loss",
    "lon_train",
    "paper_preset",
    "path_features",
    "save_model",
    "zero_model",
]
