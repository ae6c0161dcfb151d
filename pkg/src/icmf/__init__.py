"""Click-driven interactive image segmentation with a two-branch
cross-attention transformer, trained and run on a from-scratch autodiff
engine."""

from .config import ModelConfig, TrainConfig
from .estimator import ClickSegmenter
from .model import Segmenter, count_parameters
from .tensor import Tensor, no_grad

__all__ = [
    "ClickSegmenter",
    "ModelConfig",
    "Segmenter",
    "Tensor",
    "TrainConfig",
    "count_parameters",
    "no_grad",
]

__version__ = "0.1.0"
