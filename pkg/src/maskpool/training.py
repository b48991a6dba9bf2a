"""Adam, plateau learning-rate halving, early stopping, and the epoch loop."""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .data import make_batch, sample_crop_length
from .errors import DivergenceError, EmptyInputError
from .losses import add_weight_decay, sigmoid_binary_cross_entropy, softmax_cross_entropy
from .network import NetworkModel
from .numerics import Rng


class Adam:
    """Adam with bias correction; one moment pair per parameter."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p in self.params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise DivergenceError(f"non-finite gradient in {p.name}; step aborted")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / bias1
            v_hat = v / bias2
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)


CONTINUE = "continue"
HALVE_LR = "halve_lr"
STOP = "stop"


@dataclass
class Schedule:
    """Plateau detection on a to-be-minimized validation metric.

    An epoch improves if the metric drops below ``best - min_delta``.  After
    ``patience_lr`` epochs without improvement the learning rate halves
    (never below ``lr_floor``); after ``patience_stop`` epochs without
    improvement training stops and the best checkpoint is restored.
    """

    min_delta: float = 1e-4
    patience_lr: int = 5
    patience_stop: int = 15
    lr_floor: float = 1e-5
    best_metric: float = float("inf")
    epochs_since_improve: int = 0
    epochs_since_lr_drop: int = 0

    def __post_init__(self):
        if self.patience_lr >= self.patience_stop:
            raise ValueError("patience_lr must be smaller than patience_stop")

    def update(self, val_metric: float, adam: Adam) -> str:
        if not np.isfinite(val_metric):
            raise DivergenceError(f"validation metric is not finite: {val_metric}")
        if val_metric < self.best_metric - self.min_delta:
            self.best_metric = val_metric
            self.epochs_since_improve = 0
            self.epochs_since_lr_drop = 0
            return CONTINUE
        self.epochs_since_improve += 1
        self.epochs_since_lr_drop += 1
        if self.epochs_since_improve >= self.patience_stop:
            return STOP
        if self.epochs_since_lr_drop >= self.patience_lr:
            self.epochs_since_lr_drop = 0
            adam.lr = max(adam.lr / 2.0, self.lr_floor)
            return HALVE_LR
        return CONTINUE


@dataclass
class TrainSettings:
    batch_size: int = 96
    lr: float = 1e-3
    weight_decay: float = 4e-4
    max_epochs: int = 100
    min_delta: float = 1e-4
    patience_lr: int = 5
    patience_stop: int = 15
    lr_floor: float = 1e-5
    crop_min: int | None = None   # scene task: per-batch random crop bounds
    crop_max: int | None = None
    seed: int = 0
    deterministic: bool = False


@dataclass
class TrainResult:
    model: NetworkModel
    history: list = field(default_factory=list)
    best_val_loss: float = float("inf")
    best_epoch: int = -1
    stopped_early: bool = False


def _loss_fn(head: str):
    return softmax_cross_entropy if head == "softmax" else sigmoid_binary_cross_entropy


def evaluate_loss(model: NetworkModel, dataset, batch_size: int) -> float:
    """Eval-mode mean data loss over full (uncropped) segments."""
    loss_fn = _loss_fn(model.config.head)
    total = 0.0
    n = 0
    for start in range(0, len(dataset), batch_size):
        batch = make_batch(dataset[start:start + batch_size],
                           min_frames=model.min_input_frames)
        logits = model.forward(batch.x, batch.mask.valid, training=False)
        loss, _ = loss_fn(logits, batch.y)
        total += loss * len(batch.mask)
        n += len(batch.mask)
    if n == 0:
        raise EmptyInputError("cannot evaluate on an empty dataset")
    return total / n


def evaluate_accuracy(model: NetworkModel, dataset, batch_size: int) -> float:
    """Eval-mode fraction of correct argmax predictions (single-label)."""
    correct = 0
    for start in range(0, len(dataset), batch_size):
        batch = make_batch(dataset[start:start + batch_size],
                           min_frames=model.min_input_frames)
        proba = model.predict_proba(batch.x, batch.mask.valid)
        correct += int((proba.argmax(axis=1) == batch.y).sum())
    return correct / len(dataset)


def train_loop(
    model: NetworkModel,
    train_set,
    val_set,
    settings: TrainSettings,
    log_fh=None,
    checkpoint_path=None,
) -> TrainResult:
    """Run the full training recipe.

    Datasets are lists of (features, label) pairs; features are
    standardized frames-x-bins float32 matrices.  Per epoch: shuffle, build
    padded mini-batches (scene task crops every batch to one shared random
    length first), forward in train mode, backward, weight decay, Adam
    step; then validate in eval mode on full segments and update the
    plateau schedule.  The best-validation snapshot is restored at the end.
    """
    if not train_set:
        raise EmptyInputError("training set is empty")
    if not val_set:
        raise EmptyInputError("validation set is empty")
    loss_fn = _loss_fn(model.config.head)
    params = model.parameters()
    adam = Adam(params, lr=settings.lr)
    schedule = Schedule(
        min_delta=settings.min_delta,
        patience_lr=settings.patience_lr,
        patience_stop=settings.patience_stop,
        lr_floor=settings.lr_floor,
    )
    rng = Rng(settings.seed)
    result = TrainResult(model=model)
    best_state = None
    cropping = settings.crop_min is not None and settings.crop_max is not None
    single_label = model.config.head == "softmax"

    for epoch in range(1, settings.max_epochs + 1):
        t0 = time.monotonic()
        order = rng.child("shuffle", epoch).permutation(len(train_set))
        epoch_loss = 0.0
        seen = 0
        for batch_idx, start in enumerate(range(0, len(order), settings.batch_size)):
            idx = order[start:start + settings.batch_size]
            samples = [train_set[i] for i in idx]
            crop = None
            batch_rng = rng.child("batch", epoch, batch_idx)
            if cropping:
                crop = sample_crop_length(batch_rng, settings.crop_min, settings.crop_max)
            batch = make_batch(samples, crop=crop, rng=batch_rng,
                               min_frames=model.min_input_frames)
            logits = model.forward(batch.x, batch.mask.valid, training=True)
            loss, dlogits = loss_fn(logits, batch.y)
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss diverged at epoch {epoch}")
            model.zero_grad()
            model.backward(dlogits)
            add_weight_decay(params, settings.weight_decay)
            adam.step()
            epoch_loss += loss * len(batch.mask)
            seen += len(batch.mask)

        val_loss = evaluate_loss(model, val_set, settings.batch_size)
        val_metric = (evaluate_accuracy(model, val_set, settings.batch_size)
                      if single_label else None)
        action = schedule.update(val_loss, adam)
        improved = schedule.epochs_since_improve == 0
        if improved:
            best_state = model.snapshot()
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            if checkpoint_path is not None:
                model.save(checkpoint_path)

        seconds = 0.0 if settings.deterministic else round(time.monotonic() - t0, 3)
        record = {
            "epoch": epoch,
            "lr": adam.lr,
            "train_loss": epoch_loss / seen,
            "val_loss": val_loss,
            "val_metric": val_metric,
            "seconds": seconds,
        }
        result.history.append(record)
        if log_fh is not None:
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            log_fh.flush()
        if action == STOP:
            result.stopped_early = True
            break

    if best_state is not None:
        model.load_state(best_state)
        if checkpoint_path is not None:
            model.save(checkpoint_path)
    return result
