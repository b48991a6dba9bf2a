"""Network layers with hand-written forward and backward passes.

Shape conventions: the network entry tensor is (batch, 1, frames, bins).
The filterbank convolution collapses the bin axis, so every later layer
carries (batch, channels, frames).  Convolutions are valid (no padding)
and bias-free; batch norm's beta supplies the affine shift.

Each sample in a batch owns a valid-length entry; frames at or beyond it
are zero padding.  ``propagate_mask`` counts exactly the output frames
whose full receptive field lies inside the valid input region, which is
what makes eval-mode outputs independent of the padded tail.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, ShapeError, TooShortError, UninitializedStatsError
from .numerics import Rng, TRAIN_DTYPE


class Parameter:
    """A learnable tensor plus its gradient slot.

    ``decay`` marks parameters subject to L2 weight decay (conv and dense
    weights; never batch-norm affine terms or biases).
    """

    __slots__ = ("name", "data", "grad", "decay")

    def __init__(self, name: str, data: np.ndarray, decay: bool = False):
        self.name = name
        self.data = data
        self.grad = None
        self.decay = decay

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape}, decay={self.decay})"


def out_length(length: int, kernel: int, stride: int) -> int:
    """Valid-convolution output length: floor((L - k)/s) + 1."""
    if length < kernel:
        raise TooShortError(f"length {length} is shorter than kernel {kernel}")
    return (length - kernel) // stride + 1


def propagate_mask(valid: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """Valid lengths after a strided valid convolution.

    An output frame counts as valid only if its whole receptive field lies
    inside the valid input region, so valid' = floor((valid - k)/s) + 1.
    """
    valid = np.asarray(valid, dtype=np.int64)
    if np.any(valid < kernel):
        short = int(valid.min())
        raise TooShortError(
            f"sample with {short} valid frames cannot pass a kernel-{kernel} convolution"
        )
    return (valid - kernel) // stride + 1


@dataclass
class LengthMask:
    """Per-sample count of non-padded frames at the current layer."""

    valid: np.ndarray

    def __post_init__(self):
        self.valid = np.asarray(self.valid, dtype=np.int64)
        if self.valid.ndim != 1:
            raise ShapeError("length mask must be 1-D")
        if np.any(self.valid < 1):
            raise ShapeError("valid lengths must be >= 1")

    def __len__(self):
        return self.valid.size

    def propagate(self, kernel: int, stride: int) -> "LengthMask":
        return LengthMask(propagate_mask(self.valid, kernel, stride))


def min_input_frames(num_layers: int, kernel: int, stride: int) -> int:
    """Smallest input length that survives ``num_layers`` strided
    convolutions with at least one frame left."""
    length = 1
    for _ in range(num_layers):
        length = stride * (length - 1) + kernel
    return length


class FilterbankConv:
    """Layer-1 convolution: a per-frame linear map over the full spectrum.

    Kernel size equals the bin count, stride 1, so the bin axis collapses
    and each output channel is a learned filter over the spectrum.
    """

    def __init__(self, in_bins: int, out_channels: int, rng: Rng, dtype=TRAIN_DTYPE):
        self.in_bins = in_bins
        self.out_channels = out_channels
        scale = np.sqrt(2.0 / in_bins)
        self.weight = Parameter(
            "filterbank.weight", rng.normal((out_channels, in_bins), scale, dtype), decay=True
        )
        self._x_flat = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError(f"filterbank expects (b, 1, h, w), got {x.shape}")
        if x.shape[3] != self.in_bins:
            raise ShapeError(f"filterbank built for {self.in_bins} bins, input has {x.shape[3]}")
        b, _, h, w = x.shape
        flat = x.reshape(b * h, w)
        out = flat @ self.weight.data.T
        self._x_flat = flat
        self._b, self._h = b, h
        return out.reshape(b, h, self.out_channels).transpose(0, 2, 1)

    def backward(self, gout: np.ndarray) -> np.ndarray:
        g = gout.transpose(0, 2, 1).reshape(self._b * self._h, self.out_channels)
        self.weight.grad = g.T @ self._x_flat
        dflat = g @ self.weight.data
        return dflat.reshape(self._b, 1, self._h, self.in_bins)

    def parameters(self):
        return [self.weight]


class TemporalConv:
    """Strided valid convolution over frames: kernel 3, stride 2 downsamples
    in place of a pooling layer."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int,
                 rng: Rng, name: str, dtype=TRAIN_DTYPE):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        fan_in = in_channels * kernel
        self.weight = Parameter(
            f"{name}.weight",
            rng.normal((out_channels, in_channels, kernel), np.sqrt(2.0 / fan_in), dtype),
            decay=True,
        )
        self._cols = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ShapeError(f"temporal conv expects (b, {self.in_channels}, h), got {x.shape}")
        b, c, h = x.shape
        h_out = out_length(h, self.kernel, self.stride)
        windows = np.lib.stride_tricks.sliding_window_view(x, self.kernel, axis=2)
        windows = windows[:, :, :: self.stride][:, :, :h_out]  # (b, c, h_out, k)
        cols = np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(
            b * h_out, c * self.kernel
        )
        w_mat = self.weight.data.reshape(self.out_channels, c * self.kernel)
        out = cols @ w_mat.T
        self._cols = cols
        self._shape_in = (b, c, h)
        self._h_out = h_out
        return out.reshape(b, h_out, self.out_channels).transpose(0, 2, 1)

    def backward(self, gout: np.ndarray) -> np.ndarray:
        b, c, h = self._shape_in
        h_out = self._h_out
        g = gout.transpose(0, 2, 1).reshape(b * h_out, self.out_channels)
        w_mat = self.weight.data.reshape(self.out_channels, c * self.kernel)
        self.weight.grad = (g.T @ self._cols).reshape(self.weight.data.shape)
        dcols = (g @ w_mat).reshape(b, h_out, c, self.kernel)
        dx = np.zeros((b, c, h), dtype=gout.dtype)
        for k in range(self.kernel):
            stop = k + self.stride * (h_out - 1) + 1
            dx[:, :, k:stop:self.stride] += dcols[:, :, :, k].transpose(0, 2, 1)
        return dx

    def parameters(self):
        return [self.weight]


class BatchNorm:
    """Per-channel batch normalization over (batch x frames) positions.

    Train mode normalizes by batch statistics and keeps an exponential
    moving average (``running = momentum*running + (1-momentum)*batch``);
    eval mode normalizes by the running statistics.  Running statistics
    start unset: using eval mode before they are initialized (by the
    network builder or a train step) raises.

    When ``valid`` lengths are supplied in train mode, statistics are
    computed over valid frames only; normalization itself still applies at
    every position.
    """

    def __init__(self, channels: int, momentum: float = 0.9, epsilon: float = 1e-5,
                 name: str = "bn", dtype=TRAIN_DTYPE):
        self.channels = channels
        self.momentum = momentum
        self.epsilon = epsilon
        self.dtype = dtype
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels, dtype=dtype))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels, dtype=dtype))
        self.running_mean = None
        self.running_var = None
        self._cache = None

    def init_running_stats(self):
        self.running_mean = np.zeros(self.channels, dtype=self.dtype)
        self.running_var = np.ones(self.channels, dtype=self.dtype)

    @property
    def initialized(self) -> bool:
        return self.running_mean is not None

    def forward(self, x: np.ndarray, training: bool, valid: np.ndarray | None = None) -> np.ndarray:
        if x.ndim != 3 or x.shape[1] != self.channels:
            raise ShapeError(f"batch norm expects (b, {self.channels}, t), got {x.shape}")
        b, c, t = x.shape
        if training:
            if valid is None:
                count = b * t
                mean = x.mean(axis=(0, 2))
                var = x.var(axis=(0, 2))
                wmask = None
            else:
                valid = np.asarray(valid, dtype=np.int64)
                wmask = (np.arange(t)[None, None, :] < valid[:, None, None]).astype(x.dtype)
                count = int(valid.sum())
                mean = (x * wmask).sum(axis=(0, 2)) / count
                diff = (x - mean[None, :, None]) * wmask
                var = (diff * diff).sum(axis=(0, 2)) / count
            if not self.initialized:
                self.init_running_stats()
            m = self.momentum
            self.running_mean = (m * self.running_mean + (1.0 - m) * mean).astype(self.dtype)
            self.running_var = (m * self.running_var + (1.0 - m) * var).astype(self.dtype)
        else:
            if not self.initialized:
                raise UninitializedStatsError(
                    "batch norm used in eval mode before running statistics were set"
                )
            mean = self.running_mean
            var = self.running_var
            count = None
            wmask = None
        inv = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - mean[None, :, None]) * inv[None, :, None]
        self._cache = (xhat, inv, training, wmask, count)
        return self.gamma.data[None, :, None] * xhat + self.beta.data[None, :, None]

    def backward(self, gout: np.ndarray) -> np.ndarray:
        xhat, inv, training, wmask, count = self._cache
        self.gamma.grad = (gout * xhat).sum(axis=(0, 2))
        self.beta.grad = gout.sum(axis=(0, 2))
        scale = (self.gamma.data * inv)[None, :, None]
        if not training:
            return gout * scale
        # Batch statistics depend on the input, so every position feeds a
        # correction back into the positions that contributed to the stats.
        corr = (self.beta.grad[None, :, None]
                + xhat * self.gamma.grad[None, :, None]) / count
        if wmask is not None:
            corr = corr * wmask
        return scale * (gout - corr)

    def parameters(self):
        return [self.gamma, self.beta]


class ReLU:
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._active = x > 0  # subgradient 0 at exactly 0
        return np.maximum(x, 0)

    def backward(self, gout: np.ndarray) -> np.ndarray:
        return gout * self._active

    def parameters(self):
        return []


class MaskedMeanPool:
    """Global mean over the valid frames of each sample.

    Padded frames contribute nothing to the forward mean and receive an
    exactly-zero gradient.
    """

    def forward(self, x: np.ndarray, valid: np.ndarray) -> np.ndarray:
        if x.ndim != 3:
            raise ShapeError(f"pool expects (b, c, t), got {x.shape}")
        b, c, t = x.shape
        valid = np.asarray(valid, dtype=np.int64)
        if valid.shape != (b,):
            raise ShapeError(f"need one valid length per sample, got {valid.shape}")
        if np.any(valid == 0):
            raise EmptyInputError("cannot pool a sample with zero valid frames")
        if np.any(valid < 0) or np.any(valid > t):
            raise ShapeError(f"valid lengths must lie in [1, {t}]")
        wmask = (np.arange(t)[None, None, :] < valid[:, None, None]).astype(x.dtype)
        self._wmask = wmask
        self._valid = valid
        return (x * wmask).sum(axis=2) / valid[:, None].astype(x.dtype)

    def backward(self, gout: np.ndarray) -> np.ndarray:
        g = gout[:, :, None] / self._valid[:, None, None].astype(gout.dtype)
        return g * self._wmask

    def parameters(self):
        return []


class Dense:
    """Fully-connected output layer mapping pooled features to logits."""

    def __init__(self, in_features: int, out_features: int, rng: Rng, dtype=TRAIN_DTYPE):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(
            "dense.weight", rng.normal((in_features, out_features), np.sqrt(2.0 / in_features), dtype),
            decay=True,
        )
        self.bias = Parameter("dense.bias", np.zeros(out_features, dtype=dtype))
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"dense expects (b, {self.in_features}), got {x.shape}")
        self._x = x
        return x @ self.weight.data + self.bias.data

    def backward(self, gout: np.ndarray) -> np.ndarray:
        self.weight.grad = self._x.T @ gout
        self.bias.grad = gout.sum(axis=0)
        return gout @ self.weight.data.T

    def parameters(self):
        return [self.weight, self.bias]
