"""STFT frontend and dataset-level feature standardization.

The frontend is a Hann-windowed magnitude STFT: 25 ms windows, 15 ms hop,
no center padding, keeping the non-redundant half of the spectrum.  At
16 kHz that gives 201 frequency bins per frame, at 44.1 kHz it gives 552.

Standardization maps every frequency bin to zero mean and unit variance,
with statistics accumulated in one streaming pass over the training split.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioClip
from .errors import EmptyInputError, FileParseError, ShapeError, TooShortError

STD_EPSILON = 1e-8

_CACHE_MAGIC = b"MPFC"
_CACHE_VERSION = 1
_STD_MAGIC = b"MPSD"
_STD_VERSION = 1


def stft_params(sample_rate: int, window_ms: float = 25.0, hop_ms: float = 15.0) -> tuple[int, int]:
    """Window and hop in samples: n_fft = round(window_ms*fs/1000) (half to
    even), hop = floor(hop_ms*fs/1000)."""
    n_fft = round(window_ms * sample_rate / 1000.0)
    hop = int(np.floor(hop_ms * sample_rate / 1000.0))
    return n_fft, hop


def hann_periodic(n: int) -> np.ndarray:
    """Periodic (DFT-even) Hann window: w[k] = 0.5*(1 - cos(2*pi*k/n))."""
    k = np.arange(n, dtype=np.float64)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / n))


def num_frames(num_samples: int, n_fft: int, hop: int) -> int:
    if num_samples < n_fft:
        raise TooShortError(
            f"signal of {num_samples} samples is shorter than one {n_fft}-sample window"
        )
    return 1 + (num_samples - n_fft) // hop


@dataclass
class Spectrogram:
    """Magnitude STFT, frames x bins, with non-negative entries."""

    mag: np.ndarray

    def __post_init__(self):
        self.mag = np.asarray(self.mag)
        if self.mag.ndim != 2:
            raise ShapeError(f"spectrogram must be 2-D, got {self.mag.ndim}-D")
        if self.mag.size and float(self.mag.min()) < 0.0:
            raise ShapeError("spectrogram magnitudes must be non-negative")

    @property
    def frames(self) -> int:
        return self.mag.shape[0]

    @property
    def bins(self) -> int:
        return self.mag.shape[1]


def stft_magnitude(
    clip: AudioClip,
    window_ms: float = 25.0,
    hop_ms: float = 15.0,
    dtype=np.float32,
) -> Spectrogram:
    """Magnitude STFT of a clip.

    Frames start at sample 0 with no padding, so the frame count is exactly
    ``1 + floor((len - n_fft) / hop)``.  Each frame is multiplied by a
    periodic Hann window, transformed, and the magnitudes of bins
    0..n_fft//2 are kept (bins = n_fft//2 + 1).
    """
    n_fft, hop = stft_params(clip.sample_rate, window_ms, hop_ms)
    frames = num_frames(clip.samples.size, n_fft, hop)
    windows = np.lib.stride_tricks.sliding_window_view(clip.samples, n_fft)[::hop][:frames]
    windowed = windows * hann_periodic(n_fft)
    mag = np.abs(np.fft.rfft(windowed, n=n_fft, axis=1))
    return Spectrogram(mag.astype(dtype))


@dataclass
class Standardizer:
    """Per-bin affine transform taking features to zero mean, unit variance.

    Statistics use the population variance convention and the standard
    deviation is floored at ``epsilon`` so constant bins stay finite.
    """

    mean: np.ndarray
    std: np.ndarray
    epsilon: float = STD_EPSILON

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ShapeError("standardizer mean/std must be matching 1-D vectors")
        if np.any(self.std <= 0):
            raise ShapeError("standardizer std must be strictly positive")

    @property
    def bins(self) -> int:
        return self.mean.size


class StandardizerAccumulator:
    """Streaming (count, sum, sum-of-squares) accumulator.

    Partials from parallel workers merge associatively via ``merge``.
    """

    def __init__(self, bins: int):
        self.bins = int(bins)
        self.count = 0
        self.sum = np.zeros(self.bins, dtype=np.float64)
        self.sumsq = np.zeros(self.bins, dtype=np.float64)

    def add(self, spec: Spectrogram) -> None:
        if spec.bins != self.bins:
            raise ShapeError(f"expected {self.bins} bins, got {spec.bins}")
        mag = spec.mag.astype(np.float64, copy=False)
        self.count += spec.frames
        self.sum += mag.sum(axis=0)
        self.sumsq += (mag * mag).sum(axis=0)

    def merge(self, other: "StandardizerAccumulator") -> None:
        if other.bins != self.bins:
            raise ShapeError("cannot merge accumulators with different bin counts")
        self.count += other.count
        self.sum += other.sum
        self.sumsq += other.sumsq

    def finalize(self, epsilon: float = STD_EPSILON) -> Standardizer:
        if self.count < 2:
            raise EmptyInputError("standardizer needs at least 2 frames in total")
        mean = self.sum / self.count
        var = np.maximum(self.sumsq / self.count - mean * mean, 0.0)
        std = np.maximum(np.sqrt(var), epsilon)
        return Standardizer(mean=mean, std=std, epsilon=epsilon)


def fit_standardizer(specs, epsilon: float = STD_EPSILON) -> Standardizer:
    """Fit per-bin statistics over all frames of all given spectrograms."""
    acc = None
    for spec in specs:
        if acc is None:
            acc = StandardizerAccumulator(spec.bins)
        acc.add(spec)
    if acc is None:
        raise EmptyInputError("no spectrograms to fit a standardizer on")
    return acc.finalize(epsilon)


def apply_standardizer(s: Standardizer, mag: np.ndarray) -> np.ndarray:
    """Standardize a frames-x-bins feature matrix.

    The output is a plain feature matrix and may be negative; the
    non-negativity of raw magnitudes no longer applies.
    """
    mag = np.asarray(mag)
    if mag.ndim != 2 or mag.shape[1] != s.bins:
        raise ShapeError(
            f"feature matrix with {mag.shape[-1] if mag.ndim else 0} bins does not "
            f"match standardizer with {s.bins} bins"
        )
    out = (mag.astype(np.float64) - s.mean) / s.std
    return out.astype(mag.dtype if mag.dtype.kind == "f" else np.float32)


# ---------------------------------------------------------------------------
# Binary containers.  Little-endian throughout.

def save_feature_cache(path, mag: np.ndarray) -> None:
    """Feature cache: magic 'MPFC', version u32, frames u32, bins u32, then
    row-major float32 data."""
    mag = np.ascontiguousarray(mag, dtype="<f4")
    if mag.ndim != 2:
        raise ShapeError("feature cache stores 2-D matrices")
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<III", _CACHE_VERSION, mag.shape[0], mag.shape[1]))
        fh.write(mag.tobytes())


def load_feature_cache(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != _CACHE_MAGIC:
        raise FileParseError(f"{path}: not a feature cache file")
    version, frames, bins = struct.unpack_from("<III", raw, 4)
    if version != _CACHE_VERSION:
        raise FileParseError(f"{path}: unsupported feature cache version {version}")
    need = 16 + 4 * frames * bins
    if len(raw) < need:
        raise FileParseError(f"{path}: truncated feature cache")
    data = np.frombuffer(raw, dtype="<f4", count=frames * bins, offset=16)
    return data.reshape(frames, bins).copy()


def save_standardizer(path, s: Standardizer, metadata: dict | None = None) -> None:
    """Standardizer file: magic 'MPSD', version u32, JSON metadata
    (length-prefixed), bins u32, then mean and std as float32 vectors."""
    meta = {"variance": "population", "epsilon": s.epsilon}
    if metadata:
        meta.update(metadata)
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_STD_MAGIC)
        fh.write(struct.pack("<II", _STD_VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", s.bins))
        fh.write(s.mean.astype("<f4").tobytes())
        fh.write(s.std.astype("<f4").tobytes())


def load_standardizer(path) -> tuple[Standardizer, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != _STD_MAGIC:
        raise FileParseError(f"{path}: not a standardizer file")
    version, meta_len = struct.unpack_from("<II", raw, 4)
    if version != _STD_VERSION:
        raise FileParseError(f"{path}: unsupported standardizer version {version}")
    meta_end = 12 + meta_len
    if len(raw) < meta_end + 4:
        raise FileParseError(f"{path}: truncated standardizer file")
    meta = json.loads(raw[12:meta_end].decode("utf-8"))
    (bins,) = struct.unpack_from("<I", raw, meta_end)
    need = meta_end + 4 + 8 * bins
    if len(raw) < need:
        raise FileParseError(f"{path}: truncated standardizer vectors")
    mean = np.frombuffer(raw, dtype="<f4", count=bins, offset=meta_end + 4)
    std = np.frombuffer(raw, dtype="<f4", count=bins, offset=meta_end + 4 + 4 * bins)
    s = Standardizer(mean=mean.astype(np.float64), std=std.astype(np.float64),
                     epsilon=float(meta.get("epsilon", STD_EPSILON)))
    return s, meta
