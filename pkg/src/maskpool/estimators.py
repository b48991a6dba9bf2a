"""Scikit-learn style wrappers around the pipeline.

The three estimators compose in a Pipeline: extract spectrograms from
audio, standardize them per bin, then fit the masked-pooling network.
Because clips vary in length, X flows through as a list of 2-D arrays
instead of one rectangular matrix.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .audio import AudioClip
from .data import make_batch
from .dsp import Standardizer, apply_standardizer, fit_standardizer, Spectrogram, stft_magnitude
from .network import NetworkConfig, NetworkModel
from .numerics import Rng
from .training import TrainSettings, train_loop
from .validation import check_binary_matrix, check_feature_list, check_single_labels


class SpectrogramExtractor(BaseEstimator, TransformerMixin):
    """Stateless transformer: audio clips to magnitude spectrograms.

    Parameters
    ----------
    window_ms, hop_ms : float
        STFT window and hop in milliseconds (defaults 25 and 15).
    """

    def __init__(self, window_ms: float = 25.0, hop_ms: float = 15.0):
        self.window_ms = window_ms
        self.hop_ms = hop_ms

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[np.ndarray]:
        out = []
        for item in X:
            if not isinstance(item, AudioClip):
                samples, rate = item
                item = AudioClip(np.asarray(samples), int(rate))
            out.append(stft_magnitude(item, self.window_ms, self.hop_ms).mag)
        return out


class SpectrogramStandardizer(BaseEstimator, TransformerMixin):
    """Per-bin zero-mean unit-variance scaling fit across all frames of the
    training set (population variance, epsilon-floored std)."""

    def __init__(self, epsilon: float = 1e-8):
        self.epsilon = epsilon

    def fit(self, X, y=None):
        mats = check_feature_list(X)
        self.standardizer_ = fit_standardizer((Spectrogram(m) for m in mats), self.epsilon)
        return self

    def transform(self, X) -> list[np.ndarray]:
        if not hasattr(self, "standardizer_"):
            raise NotFittedError("SpectrogramStandardizer is not fitted yet")
        return [apply_standardizer(self.standardizer_, np.asarray(m, dtype=np.float32))
                for m in check_feature_list(X)]

    @property
    def mean_(self) -> np.ndarray:
        return self.standardizer_.mean

    @property
    def std_(self) -> np.ndarray:
        return self.standardizer_.std


class MaskedConvNetClassifier(BaseEstimator, ClassifierMixin):
    """All-convolutional classifier over variable-length feature sequences.

    A learned filterbank collapses the bin axis, stride-2 convolutions
    downsample time, and a masked global mean pool aggregates only each
    sample's valid frames, so zero padding never influences predictions.

    Parameters
    ----------
    task : 'scene' or 'tagging'
        Single-label (softmax head, y is a label vector) or multi-label
        (sigmoid head, y is a binary clips x tags matrix).
    channels : int
        Width of every convolutional layer.
    num_temporal_layers : int
        Number of stride-2 temporal convolutions.
    crop_min, crop_max : int or None
        Scene-task training crops every mini-batch to one shared random
        length in this range; tagging ignores crops and trains on full
        segments.
    """

    def __init__(self, task: str = "scene", channels: int = 256,
                 num_temporal_layers: int = 3, batch_size: int = 96,
                 lr: float = 1e-3, weight_decay: float = 4e-4,
                 max_epochs: int = 100, patience_lr: int = 5, patience_stop: int = 15,
                 min_delta: float = 1e-4, lr_floor: float = 1e-5,
                 crop_min: int | None = None, crop_max: int | None = None,
                 bn_mask_stats: bool = False, seed: int = 0):
        self.task = task
        self.channels = channels
        self.num_temporal_layers = num_temporal_layers
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience_lr = patience_lr
        self.patience_stop = patience_stop
        self.min_delta = min_delta
        self.lr_floor = lr_floor
        self.crop_min = crop_min
        self.crop_max = crop_max
        self.bn_mask_stats = bn_mask_stats
        self.seed = seed

    def _dataset(self, mats, y):
        if self.task == "scene":
            idx = np.searchsorted(self.classes_, y)
            return [(m, int(i)) for m, i in zip(mats, idx)]
        return [(m, row) for m, row in zip(mats, y)]

    def fit(self, X, y, X_val=None, y_val=None):
        """Train the network; without a validation pair the plateau
        schedule watches the training loss."""
        mats = check_feature_list(X)
        if self.task == "scene":
            y = check_single_labels(y, len(mats))
            self.classes_ = np.unique(y)
            num_classes = self.classes_.size
            head = "softmax"
        elif self.task == "tagging":
            y = check_binary_matrix(y, len(mats))
            num_classes = y.shape[1]
            self.classes_ = np.arange(num_classes)
            head = "sigmoid"
        else:
            raise ValueError(f"task must be 'scene' or 'tagging', got {self.task!r}")

        config = NetworkConfig(
            input_bins=mats[0].shape[1], num_classes=num_classes, head=head,
            channels=self.channels, num_temporal_layers=self.num_temporal_layers,
            bn_mask_stats=self.bn_mask_stats,
        )
        model = NetworkModel.build(config, Rng(self.seed))
        train_set = self._dataset(mats, y)
        if X_val is not None:
            val_mats = check_feature_list(X_val)
            y_val = (check_single_labels(y_val, len(val_mats)) if self.task == "scene"
                     else check_binary_matrix(y_val, len(val_mats)))
            val_set = self._dataset(val_mats, y_val)
        else:
            val_set = train_set
        settings = TrainSettings(
            batch_size=self.batch_size, lr=self.lr, weight_decay=self.weight_decay,
            max_epochs=self.max_epochs, min_delta=self.min_delta,
            patience_lr=self.patience_lr, patience_stop=self.patience_stop,
            lr_floor=self.lr_floor, seed=self.seed,
            crop_min=self.crop_min if self.task == "scene" else None,
            crop_max=self.crop_max if self.task == "scene" else None,
        )
        result = train_loop(model, train_set, val_set, settings)
        self.model_ = result.model
        self.history_ = result.history
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("MaskedConvNetClassifier is not fitted yet")

    def predict_proba(self, X) -> np.ndarray:
        """Softmax rows (scene) or independent per-tag sigmoids (tagging)."""
        self._check_fitted()
        mats = check_feature_list(X, min_frames=self.model_.min_input_frames)
        out = np.empty((len(mats), self.model_.config.num_classes))
        for start in range(0, len(mats), self.batch_size):
            chunk = mats[start:start + self.batch_size]
            batch = make_batch([(m, 0) for m in chunk],
                               min_frames=self.model_.min_input_frames)
            out[start:start + len(chunk)] = self.model_.predict_proba(batch.x, batch.mask.valid)
        return out

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        if self.task == "scene":
            return self.classes_[proba.argmax(axis=1)]
        return (proba >= 0.5).astype(np.int64)

    def decision_function(self, X) -> np.ndarray:
        return self.predict_proba(X)
