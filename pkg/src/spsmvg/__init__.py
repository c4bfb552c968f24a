"""Series photo selection via multi-view graph learning."""

from .model import Hyper, ModelParams, POOLING_MODES
from .training import Metrics, TrainConfig, evaluate, init_params
from .views import ViewConfig

__all__ = [
    "Hyper",
    "ModelParams",
    "POOLING_MODES",
    "Metrics",
    "TrainConfig",
    "ViewConfig",
    "evaluate",
    "init_params",
]

__version__ = "0.1.0"
