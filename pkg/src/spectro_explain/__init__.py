"""Spectrogram classification of device emissions and LIME-based recovery
of the frequency bands a classifier relies on."""

from .aggregate import (
    AggregatedExplanation,
    EnsembleProfile,
    aggregate,
    derivative_profile,
    ensemble_stats,
    peak_recall,
    project,
)
from .limexp import Explanation, LimeParams, explain, perturb
from .model import Classifier, ReferenceCNN, TorchClassifier, TrainConfig, evaluate, train
from .quickseg import QuickshiftParams, SuperpixelMap, quickshift
from .spectro import FrequencyProfile, Spectrogram, StftParams, stft, welch
from .synthgen import DatasetManifest, DeviceSpec, SignalBank, default_manifest, synthesize_signal

__version__ = "0.1.0"
