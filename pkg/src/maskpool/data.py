"""Dataset manifests, fold splits, and padded mini-batch assembly.

A manifest is a CSV with header ``path,labels,fold`` (labels
semicolon-separated for multi-label rows) plus a companion classes file,
one class per line, whose order defines the label indices.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, ManifestError, ShapeError, TooShortError
from .layers import LengthMask
from .numerics import Rng

TASK_SINGLE = "single"
TASK_MULTI = "multi"


@dataclass
class ManifestEntry:
    path: str
    labels: tuple
    label_ids: tuple
    fold: int


@dataclass
class Manifest:
    entries: list
    task: str
    class_names: list
    num_folds: int

    def fold_split(self, fold: int) -> tuple[list, list]:
        """(train, held-out) entries for one cross-validation fold."""
        if not 1 <= fold <= self.num_folds:
            raise ManifestError(f"fold {fold} out of range [1, {self.num_folds}]")
        train = [e for e in self.entries if e.fold != fold]
        val = [e for e in self.entries if e.fold == fold]
        return train, val

    def target_for(self, entry: ManifestEntry):
        """Training target: class index (single) or binary vector (multi)."""
        if self.task == TASK_SINGLE:
            return entry.label_ids[0]
        y = np.zeros(len(self.class_names), dtype=np.float32)
        for i in entry.label_ids:
            y[i] = 1.0
        return y


def read_class_names(path) -> list:
    names = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    if not names:
        raise ManifestError(f"{path}: empty classes file")
    if len(set(names)) != len(names):
        raise ManifestError(f"{path}: duplicate class names")
    return names


def load_manifest(path, classes_path, task: str, num_folds: int | None = None) -> Manifest:
    """Load and validate a manifest.

    Class order comes from the companion classes file, never inferred from
    the rows.  If ``num_folds`` is omitted it is taken as the largest fold
    index present, requiring every fold 1..max to be non-empty.
    """
    if task not in (TASK_SINGLE, TASK_MULTI):
        raise ManifestError(f"task must be '{TASK_SINGLE}' or '{TASK_MULTI}', got {task!r}")
    class_names = read_class_names(classes_path)
    index = {name: i for i, name in enumerate(class_names)}
    entries = []
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) < {"path", "labels", "fold"}:
            raise ManifestError(f"{path}: manifest needs a 'path,labels,fold' header")
        for row_no, row in enumerate(reader, start=2):
            labels = tuple(l for l in row["labels"].split(";") if l)
            for label in labels:
                if label not in index:
                    raise ManifestError(f"{path}:{row_no}: unknown class {label!r}")
            if task == TASK_SINGLE and len(labels) != 1:
                raise ManifestError(
                    f"{path}:{row_no}: single-label rows need exactly one label, got {len(labels)}"
                )
            try:
                fold = int(row["fold"])
            except ValueError:
                raise ManifestError(f"{path}:{row_no}: fold {row['fold']!r} is not an integer")
            if fold < 1:
                raise ManifestError(f"{path}:{row_no}: fold indices start at 1")
            entries.append(ManifestEntry(
                path=row["path"], labels=labels,
                label_ids=tuple(index[l] for l in labels), fold=fold,
            ))
    if not entries:
        raise ManifestError(f"{path}: manifest has no rows")
    folds_present = {e.fold for e in entries}
    if num_folds is None:
        num_folds = max(folds_present)
        if folds_present != set(range(1, num_folds + 1)):
            raise ManifestError(f"{path}: folds are not contiguous 1..{num_folds}")
    else:
        bad = [f for f in folds_present if f > num_folds]
        if bad:
            raise ManifestError(f"{path}: fold {bad[0]} exceeds declared {num_folds} folds")
    return Manifest(entries=entries, task=task, class_names=class_names, num_folds=num_folds)


@dataclass
class Batch:
    """Zero-padded feature tensor (b, 1, h_max, w) with per-sample valid
    lengths and labels."""

    x: np.ndarray
    mask: LengthMask
    y: np.ndarray


def sample_crop_length(rng: Rng, h_min: int, h_max: int) -> int:
    """Uniform crop length shared by all samples of one mini-batch."""
    if h_min > h_max:
        raise ShapeError(f"crop range [{h_min}, {h_max}] is empty")
    return rng.integer(h_min, h_max)


def make_batch(samples, crop: int | None = None, rng: Rng | None = None,
               min_frames: int = 15) -> Batch:
    """Assemble (features, label) pairs into a padded batch.

    With ``crop`` set, each sample contributes a uniformly placed
    contiguous window of ``min(crop, length)`` frames; without it the full
    segment is used.  Rows beyond each sample's valid length are exactly
    zero.
    """
    if not samples:
        raise EmptyInputError("cannot build a batch from zero samples")
    feats = []
    labels = []
    for mat, label in samples:
        mat = np.asarray(mat)
        if mat.ndim != 2:
            raise ShapeError(f"features must be 2-D frames x bins, got shape {mat.shape}")
        if crop is not None:
            length = min(crop, mat.shape[0])
            if rng is None:
                raise ShapeError("cropping requires an rng")
            start = rng.integer(0, mat.shape[0] - length)
            mat = mat[start:start + length]
        feats.append(mat)
        labels.append(label)
    bins = feats[0].shape[1]
    if any(f.shape[1] != bins for f in feats):
        raise ShapeError("all samples in a batch must share the same bin count")
    lengths = np.array([f.shape[0] for f in feats], dtype=np.int64)
    if np.any(lengths < min_frames):
        raise TooShortError(
            f"sample with {int(lengths.min())} frames is below the {min_frames}-frame minimum"
        )
    h_max = int(lengths.max())
    x = np.zeros((len(feats), 1, h_max, bins), dtype=np.float32)
    for i, f in enumerate(feats):
        x[i, 0, :f.shape[0]] = f
    if np.isscalar(labels[0]) or np.ndim(labels[0]) == 0:
        y = np.array(labels, dtype=np.int64)
    else:
        y = np.stack([np.asarray(l, dtype=np.float32) for l in labels])
    return Batch(x=x, mask=LengthMask(lengths), y=y)
