"""Transformer-to-SNN conversion with compensated modules and exact accounting."""

from .backend import backend_name
from .calibrate import ThresholdSet, collect_stats, derive_thresholds
from .convert import SnnGraph, convert, normalize_weights
from .model import ModelConfig, ModelGraph, ann_forward, build_toy_model, load_model, save_model
from .neuron import MTNeuronState, ThresholdLadder, build_ladder, mth
from .runtime import RunResult, naive_nonlinear_demo, snn_run, spike_statistics

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "ModelGraph",
    "MTNeuronState",
    "RunResult",
    "SnnGraph",
    "ThresholdLadder",
    "ThresholdSet",
    "ann_forward",
    "backend_name",
    "build_ladder",
    "build_toy_model",
    "collect_stats",
    "convert",
    "derive_thresholds",
    "load_model",
    "mth",
    "naive_nonlinear_demo",
    "normalize_weights",
    "save_model",
    "snn_run",
    "spike_statistics",
    "__version__",
]
