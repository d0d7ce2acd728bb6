"""Cross-frame semantic consistency for video scene parsing, at desk scale."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, DimensionError, StateError, StscError, TrainingError
from .losses import StclConfig, cross_entropy, stcl, stcl_per_anchor, total_loss
from .metrics import MetricsReport, evaluate, miou, video_consistency, wiou
from .model import ModelConfig, SegNet, load_checkpoint, save_checkpoint
from .pseudo import PseudoLabelConfig, harden
from .synthetic import ClipConfig, generate_clip, sparsify_labels
from .trainer import TrainConfig, fit, sample_pair, train
from .video import IGNORE, VideoClip, load_clip, save_clip

__all__ = [
    "ClipConfig", "ConfigError", "DataError", "DimensionError", "IGNORE", "MetricsReport",
    "ModelConfig", "PseudoLabelConfig", "SegNet", "StateError", "StclConfig", "StscError",
    "TrainConfig", "TrainingError", "VideoClip", "cross_entropy", "evaluate", "fit",
    "generate_clip", "harden", "load_checkpoint", "load_clip", "miou", "sample_pair",
    "save_checkpoint", "save_clip", "sparsify_labels", "stcl", "stcl_per_anchor", "total_loss",
    "train", "video_consistency", "wiou",
]
