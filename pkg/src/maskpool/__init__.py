"""maskpool: variable-length audio classification with an all-convolutional
network and masked global mean pooling.

The package covers the whole pipeline: WAV ingestion, Hann-windowed
magnitude STFT with per-bin standardization, hand-written forward/backward
passes for every layer, Adam training with plateau LR halving and early
stopping, and per-class accuracy / per-tag equal-error-rate evaluation.
"""

__version__ = "0.1.0"

from .audio import AudioClip, read_wav, write_wav
from .dsp import (
    Spectrogram,
    Standardizer,
    apply_standardizer,
    fit_standardizer,
    stft_magnitude,
)
from .estimators import (
    MaskedConvNetClassifier,
    SpectrogramExtractor,
    SpectrogramStandardizer,
)
from .layers import LengthMask, propagate_mask
from .metrics import ConfusionMatrix, EerResult, eer, per_class_accuracy
from .network import NetworkConfig, NetworkModel
from .numerics import Rng, grad_check, matmul, tensor_new
from .reference import reference_eer_bruteforce, reference_forward_unpadded
from .synth import synth_dataset
from .training import Adam, Schedule, TrainSettings, train_loop

__all__ = [
    "AudioClip",
    "Adam",
    "ConfusionMatrix",
    "EerResult",
    "LengthMask",
    "MaskedConvNetClassifier",
    "NetworkConfig",
    "NetworkModel",
    "Rng",
    "Schedule",
    "Spectrogram",
    "SpectrogramExtractor",
    "SpectrogramStandardizer",
    "Standardizer",
    "TrainSettings",
    "apply_standardizer",
    "eer",
    "fit_standardizer",
    "grad_check",
    "matmul",
    "per_class_accuracy",
    "propagate_mask",
    "read_wav",
    "reference_eer_bruteforce",
    "reference_forward_unpadded",
    "stft_magnitude",
    "synth_dataset",
    "tensor_new",
    "train_loop",
    "write_wav",
]
