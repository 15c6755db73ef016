"""Long-term human motion forecasting through keyposes.

Keyposes are extracted from pose sequences, clustered into a label
vocabulary, predicted with a recurrent classifier and turned back into
motion by linear interpolation between cluster centers.
"""

from .cluster import (
    ClusterModel,
    DurationCategory,
    LabeledKeypose,
    assign_label,
    categorize_duration,
    kmeans_fit,
    label_track,
    prune_track,
    representative_duration,
)
from .core import MotionSequence, RngState
from .extract import Keypose, KeyposeTrack, extract_keyposes, oracle_extract, reconstruct
from .io import load_sequence, save_sequence
from .metrics import diversity, mpjpe, mpjpe_multi, power_spectrum, pskl
from .net import KeyposeNet, init_net, scheduled_sampling_prob
from .predict import Forecast, interpolate_forecast, rollout, sample_futures
from .synth import SynthSpec, synth_dataset
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "ClusterModel", "DurationCategory", "LabeledKeypose", "assign_label", "categorize_duration",
    "kmeans_fit", "label_track", "prune_track", "representative_duration",
    "MotionSequence", "RngState",
    "Keypose", "KeyposeTrack", "extract_keyposes", "oracle_extract", "reconstruct",
    "load_sequence", "save_sequence",
    "diversity", "mpjpe", "mpjpe_multi", "power_spectrum", "pskl",
    "KeyposeNet", "init_net", "scheduled_sampling_prob",
    "Forecast", "interpolate_forecast", "rollout", "sample_futures",
    "SynthSpec", "synth_dataset",
    "TrainConfig", "train",
]
