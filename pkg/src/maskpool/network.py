"""Assembling the all-convolutional network and moving it to/from disk.

Layer stack: filterbank conv -> BN -> ReLU, then ``num_temporal_layers``
blocks of (strided temporal conv -> BN -> ReLU), then masked global mean
pooling and a fully-connected output layer.  The forward pass returns raw
logits; softmax/sigmoid are fused into the losses and applied explicitly
only on the predict paths.
"""

import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import (
    CheckpointError,
    ConfigMismatchError,
    ShapeError,
    TooShortError,
)
from .layers import (
    BatchNorm,
    Dense,
    FilterbankConv,
    MaskedMeanPool,
    ReLU,
    TemporalConv,
    min_input_frames,
    propagate_mask,
)
from .numerics import Rng, TRAIN_DTYPE

_CKPT_MAGIC = b"MPNW"
_CKPT_VERSION = 1

HEADS = ("softmax", "sigmoid")


@dataclass
class NetworkConfig:
    """Architecture hyperparameters.

    ``head`` selects the task type: softmax for single-label scene
    classification, sigmoid for multi-label tagging.
    """

    input_bins: int
    num_classes: int
    head: str = "softmax"
    channels: int = 256
    num_temporal_layers: int = 3
    kernel_time: int = 3
    stride_time: int = 2
    bn_momentum: float = 0.9
    bn_epsilon: float = 1e-5
    bn_mask_stats: bool = False

    def __post_init__(self):
        if self.head not in HEADS:
            raise ShapeError(f"head must be one of {HEADS}, got {self.head!r}")
        for name in ("input_bins", "num_classes", "channels", "num_temporal_layers",
                     "kernel_time", "stride_time"):
            if getattr(self, name) < 1:
                raise ShapeError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**d)


class NetworkModel:
    """The assembled network with its parameters and running statistics."""

    def __init__(self, config: NetworkConfig, rng: Rng | None = None, dtype=TRAIN_DTYPE):
        cfg = config
        self.config = cfg
        self.dtype = dtype
        rng = rng if rng is not None else Rng(0)
        self.filterbank = FilterbankConv(cfg.input_bins, cfg.channels, rng.child("fb"), dtype)
        self.temporal = [
            TemporalConv(cfg.channels, cfg.channels, cfg.kernel_time, cfg.stride_time,
                         rng.child("conv", i), f"conv{i + 2}", dtype)
            for i in range(cfg.num_temporal_layers)
        ]
        self.bns = [
            BatchNorm(cfg.channels, cfg.bn_momentum, cfg.bn_epsilon, f"bn{i + 1}", dtype)
            for i in range(1 + cfg.num_temporal_layers)
        ]
        self.relus = [ReLU() for _ in range(1 + cfg.num_temporal_layers)]
        self.pool = MaskedMeanPool()
        self.dense = Dense(cfg.channels, cfg.num_classes, rng.child("dense"), dtype)
        self._final_valid = None

    @classmethod
    def build(cls, config: NetworkConfig, rng: Rng, dtype=TRAIN_DTYPE) -> "NetworkModel":
        """He-initialize a fresh model; running statistics start at (0, 1)."""
        model = cls(config, rng, dtype)
        for bn in model.bns:
            bn.init_running_stats()
        return model

    # -- shape bookkeeping --------------------------------------------------

    @property
    def min_input_frames(self) -> int:
        return min_input_frames(self.config.num_temporal_layers,
                                self.config.kernel_time, self.config.stride_time)

    def parameters(self):
        params = self.filterbank.parameters()
        for conv, bn in zip([None] + self.temporal, self.bns):
            if conv is not None:
                params += conv.parameters()
            params += bn.parameters()
        params += self.dense.parameters()
        return params

    def count_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    # -- forward / backward --------------------------------------------------

    def forward(self, x: np.ndarray, valid: np.ndarray, training: bool) -> np.ndarray:
        """Run the stack on a padded batch, returning logits (b, K).

        ``valid`` holds each sample's non-padded frame count; it is pushed
        through every strided layer so the pool sees only genuinely valid
        frames.
        """
        valid = np.asarray(valid, dtype=np.int64)
        if x.ndim != 4:
            raise ShapeError(f"expected (b, 1, h, w) input, got shape {x.shape}")
        if valid.shape != (x.shape[0],):
            raise ShapeError("need exactly one valid length per sample")
        if np.any(valid > x.shape[2]):
            raise ShapeError("valid length exceeds padded frame count")
        if np.any(valid < self.min_input_frames):
            raise TooShortError(
                f"every sample needs >= {self.min_input_frames} valid frames "
                f"to survive {self.config.num_temporal_layers} stride-"
                f"{self.config.stride_time} layers; got {int(valid.min())}"
            )
        cfg = self.config
        mask_stats = cfg.bn_mask_stats

        h = self.filterbank.forward(x)
        h = self.bns[0].forward(h, training, valid if mask_stats else None)
        h = self.relus[0].forward(h)
        v = valid
        for i, conv in enumerate(self.temporal):
            h = conv.forward(h)
            v = propagate_mask(v, cfg.kernel_time, cfg.stride_time)
            h = self.bns[i + 1].forward(h, training, v if mask_stats else None)
            h = self.relus[i + 1].forward(h)
        self._final_valid = v
        f = self.pool.forward(h, v)
        return self.dense.forward(f)

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        """Backpropagate from logit gradients; parameter grads land on the
        Parameter objects.  Returns the input gradient."""
        g = self.dense.backward(dlogits)
        g = self.pool.backward(g)
        for i in range(len(self.temporal) - 1, -1, -1):
            g = self.relus[i + 1].backward(g)
            g = self.bns[i + 1].backward(g)
            g = self.temporal[i].backward(g)
        g = self.relus[0].backward(g)
        g = self.bns[0].backward(g)
        return self.filterbank.backward(g)

    def predict_proba(self, x: np.ndarray, valid: np.ndarray) -> np.ndarray:
        """Eval-mode class probabilities: softmax rows or per-class sigmoids."""
        logits = self.forward(x, valid, training=False)
        if self.config.head == "softmax":
            z = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(z)
            return e / e.sum(axis=1, keepdims=True)
        return 1.0 / (1.0 + np.exp(-logits))

    # -- state handling -------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        """All parameters plus batch-norm running statistics, by name."""
        state = {p.name: p.data for p in self.parameters()}
        for i, bn in enumerate(self.bns):
            if bn.initialized:
                state[f"bn{i + 1}.running_mean"] = bn.running_mean
                state[f"bn{i + 1}.running_var"] = bn.running_var
        return state

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        own = {p.name: p for p in self.parameters()}
        for name, param in own.items():
            if name not in state:
                raise CheckpointError(f"checkpoint is missing parameter {name!r}")
            arr = state[name]
            if arr.shape != param.data.shape:
                raise CheckpointError(
                    f"parameter {name!r} has shape {arr.shape}, expected {param.data.shape}"
                )
            param.data = arr.astype(self.dtype).copy()
        for i, bn in enumerate(self.bns):
            mean_key = f"bn{i + 1}.running_mean"
            if mean_key in state:
                bn.running_mean = state[mean_key].astype(self.dtype).copy()
                bn.running_var = state[f"bn{i + 1}.running_var"].astype(self.dtype).copy()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state_arrays().items()}

    # -- serialization -------------------------------------------------------

    def save(self, path) -> None:
        """Checkpoint container: magic 'MPNW', version, JSON config, then
        named float32 records for every parameter and running statistic."""
        state = self.state_arrays()
        cfg_bytes = json.dumps(self.config.to_dict(), sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(_CKPT_MAGIC)
            fh.write(struct.pack("<II", _CKPT_VERSION, len(cfg_bytes)))
            fh.write(cfg_bytes)
            fh.write(struct.pack("<I", len(state)))
            for name in sorted(state):
                arr = np.ascontiguousarray(state[name], dtype="<f4")
                name_b = name.encode("utf-8")
                fh.write(struct.pack("<H", len(name_b)))
                fh.write(name_b)
                fh.write(struct.pack("<B", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(arr.tobytes())

    @classmethod
    def load(cls, path, dtype=TRAIN_DTYPE) -> "NetworkModel":
        raw = Path(path).read_bytes()
        if len(raw) < 12 or raw[:4] != _CKPT_MAGIC:
            raise CheckpointError(f"{path}: not a network checkpoint")
        version, cfg_len = struct.unpack_from("<II", raw, 4)
        if version != _CKPT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        offset = 12
        try:
            cfg = NetworkConfig.from_dict(json.loads(raw[offset:offset + cfg_len].decode("utf-8")))
            offset += cfg_len
            (n_records,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            state = {}
            for _ in range(n_records):
                (name_len,) = struct.unpack_from("<H", raw, offset)
                offset += 2
                name = raw[offset:offset + name_len].decode("utf-8")
                offset += name_len
                (ndim,) = struct.unpack_from("<B", raw, offset)
                offset += 1
                shape = struct.unpack_from(f"<{ndim}I", raw, offset)
                offset += 4 * ndim
                count = int(np.prod(shape)) if ndim else 1
                arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
                offset += 4 * count
                state[name] = arr.reshape(shape)
        except (struct.error, ValueError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
        model = cls(cfg, rng=Rng(0), dtype=dtype)
        model.load_state(state)
        for bn in model.bns:
            if not bn.initialized:
                raise CheckpointError(f"{path}: checkpoint lacks running statistics")
        return model

    def check_compatible(self, input_bins: int, num_classes: int) -> None:
        if self.config.input_bins != input_bins or self.config.num_classes != num_classes:
            raise ConfigMismatchError(
                f"checkpoint built for {self.config.input_bins} bins / "
                f"{self.config.num_classes} classes; run expects {input_bins} / {num_classes}"
            )


def parameter_table(config: NetworkConfig) -> list[dict]:
    """Per-layer description rows mirroring the architecture table.

    Stride-2 layers shrink the frame count (L' = (L - 3)//2 + 1) but the
    height column stays symbolic since it varies per clip.
    """
    cfg = config
    rows = [dict(no=0, layer="input", depth=1, height="h", width=cfg.input_bins, params=None)]
    rows.append(dict(no=1, layer="convolution", depth=cfg.channels, height="h", width=1,
                     params=cfg.channels * cfg.input_bins))
    for i in range(cfg.num_temporal_layers):
        rows.append(dict(no=2 + i, layer="convolution", depth=cfg.channels, height="h", width=1,
                         params=cfg.channels * cfg.channels * cfg.kernel_time))
    n = cfg.num_temporal_layers
    rows.append(dict(no=n + 2, layer="global pooling", depth=1, height=1,
                     width=cfg.channels, params=None))
    rows.append(dict(no=n + 3, layer="fully connected", depth=1, height=1,
                     width=cfg.num_classes,
                     params=cfg.channels * cfg.num_classes + cfg.num_classes))
    return rows


def format_parameter_table(config: NetworkConfig) -> str:
    rows = parameter_table(config)
    lines = [f"{'no':>3}  {'layer':<16} {'depth':>6} {'height':>7} {'width':>6} {'params':>12}"]
    total = 0
    for r in rows:
        params = "-" if r["params"] is None else f"{r['params']:,}"
        total += r["params"] or 0
        lines.append(
            f"{r['no']:>3}  {r['layer']:<16} {r['depth']:>6} {str(r['height']):>7} "
            f"{r['width']:>6} {params:>12}"
        )
    bn_params = 2 * config.channels * (1 + config.num_temporal_layers)
    lines.append(f"conv + dense parameters: {total:,}")
    lines.append(f"batch-norm affine parameters: {bn_params:,}")
    lines.append(f"total trainable: {total + bn_params:,}")
    return "\n".join(lines)
