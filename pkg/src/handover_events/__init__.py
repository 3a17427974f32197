"""Handover event detection and direction classification from windowed frame embeddings."""
from .estimator import HandoverDetector, WindowTransformer
from .events import (aggregate_direction, detection_metrics, direction_metrics, find_peaks,
                     gaussian_kernel, match_events, smooth)
from .loss import LossWeights, total_loss, wbce, wce_dir
from .net import ModelDims, ModelParams, backward, forward, init_params
from .synth import SynthConfig, generate_stream, jitter_embeddings
from .train import TrainConfig, train
from .windowing import FrameLabel, LabeledFrameStream, WindowSpec, enumerate_windows

__version__ = "0.1.0"

__all__ = [
    "FrameLabel", "HandoverDetector", "LabeledFrameStream", "LossWeights", "ModelDims",
    "ModelParams", "SynthConfig", "TrainConfig", "WindowSpec", "WindowTransformer",
    "aggregate_direction", "backward", "detection_metrics", "direction_metrics",
    "enumerate_windows", "find_peaks", "forward", "gaussian_kernel", "generate_stream",
    "init_params", "jitter_embeddings", "match_events", "smooth", "total_loss", "train",
    "wbce", "wce_dir",
]
