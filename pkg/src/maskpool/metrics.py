"""Evaluation metrics: per-class accuracy for single-label scene
classification and per-tag equal error rate for multi-label tagging.

Fold aggregation pools the predictions of all folds before computing
per-class metrics; with unequal fold sizes this is deterministic and the
convention is recorded in every report header.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabelsError, EmptyInputError, LabelError


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise LabelError("confusion matrix must be square")
        if np.any(self.counts < 0):
            raise LabelError("confusion counts must be non-negative")

    @classmethod
    def from_predictions(cls, y_true, y_pred, num_classes: int) -> "ConfusionMatrix":
        y_true = np.asarray(y_true, dtype=np.int64)
        y_pred = np.asarray(y_pred, dtype=np.int64)
        if y_true.shape != y_pred.shape:
            raise LabelError("prediction/label length mismatch")
        counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        np.add.at(counts, (y_true, y_pred), 1)
        return cls(counts)

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


def per_class_accuracy(conf: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Diagonal over row sums per class, plus the unweighted class mean."""
    row_sums = conf.counts.sum(axis=1)
    if np.any(row_sums == 0):
        missing = int(np.argmax(row_sums == 0))
        raise EmptyInputError(f"class {missing} has no true samples; accuracy undefined")
    per_class = conf.counts.diagonal() / row_sums
    return per_class, float(per_class.mean())


def predict_single(model, features: np.ndarray, valid: int | None = None) -> int:
    """Eval-mode argmax class for one feature matrix; ties break toward the
    lowest class index."""
    features = np.asarray(features, dtype=np.float32)
    h = features.shape[0] if valid is None else int(valid)
    x = features[None, None, :, :]
    proba = model.predict_proba(x, np.array([h]))
    return int(np.argmax(proba[0]))


def _roc_points(scores: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(FPR, FNR) at every distinct threshold, from predict-positive-at
    score >= threshold, threshold descending from +inf."""
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_targets = targets[order]
    positives = int(targets.sum())
    negatives = targets.size - positives
    tp = np.cumsum(sorted_targets)
    fp = np.cumsum(1 - sorted_targets)
    # keep only the last index of each tied score run
    distinct = np.nonzero(np.diff(sorted_scores, append=-np.inf))[0]
    fpr = np.concatenate(([0.0], fp[distinct] / negatives))
    fnr = np.concatenate(([1.0], (positives - tp[distinct]) / positives))
    return fpr, fnr


def interpolate_eer(fpr: np.ndarray, fnr: np.ndarray) -> float:
    """Crossing of the FPR and FNR polylines, linearly interpolated between
    the bracketing operating points."""
    diff = fnr - fpr
    k = int(np.argmax(diff <= 0))  # first point at or past the crossing
    if diff[k] == 0:
        return float(fpr[k])
    d0, d1 = diff[k - 1], diff[k]
    alpha = d0 / (d0 - d1)
    return float(fpr[k - 1] + alpha * (fpr[k] - fpr[k - 1]))


def eer(scores, targets) -> float:
    """Equal error rate of one score column.

    Sweeps thresholds over the sorted distinct scores; the EER is the value
    where the false-positive and false-negative rates cross, interpolated
    linearly between the adjacent operating points.
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets)
    if not np.all((targets == 0) | (targets == 1)):
        raise LabelError("targets must be binary")
    targets = targets.astype(np.int64)
    if scores.shape != targets.shape or scores.ndim != 1:
        raise LabelError("scores and targets must be matching 1-D vectors")
    positives = int(targets.sum())
    if positives == 0 or positives == targets.size:
        raise DegenerateLabelsError("EER needs at least one positive and one negative")
    fpr, fnr = _roc_points(scores, targets)
    return interpolate_eer(fpr, fnr)


@dataclass
class EerResult:
    per_tag: np.ndarray
    average: float

    @classmethod
    def from_scores(cls, scores: np.ndarray, targets: np.ndarray) -> "EerResult":
        """Per-tag EER over a clips-x-tags score matrix."""
        scores = np.asarray(scores, dtype=np.float64)
        targets = np.asarray(targets)
        if scores.shape != targets.shape or scores.ndim != 2:
            raise LabelError("need matching clips x tags matrices")
        per_tag = np.array([eer(scores[:, k], targets[:, k]) for k in range(scores.shape[1])])
        return cls(per_tag=per_tag, average=float(per_tag.mean()))


# ---------------------------------------------------------------------------
# Report files

def write_class_report_csv(path, class_names, values, average, value_name: str) -> None:
    """Per-class table in the shape of the published result tables:
    class, baseline (left blank), value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "baseline", value_name])
        for name, value in zip(class_names, values):
            writer.writerow([name, "", f"{value:.4f}"])
        writer.writerow(["average", "", f"{average:.4f}"])


def write_summary_json(path, task: str, folds, average: float, per_class: dict,
                       extra: dict | None = None) -> None:
    summary = {
        "task": task,
        "folds": folds,
        "aggregation": "pooled predictions across folds",
        "average": average,
        "per_class": per_class,
    }
    if extra:
        summary.update(extra)
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
