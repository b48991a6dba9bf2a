"""Fused heads and losses, plus L2 weight decay.

Both losses take raw logits and fuse the head nonlinearity into the loss
for numerical stability: softmax + multinomial cross-entropy for
single-label classification, sigmoid + binary cross-entropy for
multi-label tagging.
"""

from dataclasses import dataclass

import numpy as np

from .errors import LabelError


@dataclass
class LossValue:
    data_loss: float
    decay_loss: float

    @property
    def total(self) -> float:
        return self.data_loss + self.decay_loss


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log softmax probability of the true class.

    Returns (loss, gradient wrt logits); grad = (softmax - onehot) / b.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    b, k = logits.shape
    if labels.shape != (b,):
        raise LabelError(f"need one label per row, got {labels.shape} for batch {b}")
    if np.any(labels < 0) or np.any(labels >= k):
        raise LabelError(f"labels must lie in [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    loss = -float(log_probs[np.arange(b), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(b), labels] -= 1.0
    return loss, grad / b


def sigmoid_binary_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Per-element mean binary cross-entropy on logits.

    Stable form: softplus(logit) - target*logit with
    softplus(z) = max(z, 0) + log1p(exp(-|z|)).
    Returns (loss, gradient wrt logits); grad = (sigmoid - target) / (b*k).
    """
    logits = np.asarray(logits)
    targets = np.asarray(targets)
    if targets.shape != logits.shape:
        raise LabelError(f"target shape {targets.shape} != logits shape {logits.shape}")
    if not np.all((targets == 0) | (targets == 1)):
        raise LabelError("targets must be binary")
    targets = targets.astype(logits.dtype)
    softplus = np.maximum(logits, 0) + np.log1p(np.exp(-np.abs(logits)))
    loss = float((softplus - targets * logits).mean())
    sig = 1.0 / (1.0 + np.exp(-logits))
    return loss, (sig - targets) / logits.size


def weight_decay_penalty(params, lam: float) -> float:
    """(lam/2) * sum of squared decayable weights, for monitoring."""
    return 0.5 * lam * sum(float(np.sum(p.data.astype(np.float64) ** 2))
                           for p in params if p.decay)


def add_weight_decay(params, lam: float) -> float:
    """Add lam*w to the gradient of every decayable weight (classic coupled
    L2; batch-norm affine terms and biases are excluded).  Returns the
    monitoring penalty value."""
    if lam == 0.0:
        return 0.0
    for p in params:
        if p.decay:
            if p.grad is None:
                p.grad = lam * p.data
            else:
                p.grad = p.grad + lam * p.data
    return weight_decay_penalty(params, lam)
