"""Input validation helpers for the estimator-facing API.

The estimators consume variable-length sequences, so X is a list of
frames-x-bins matrices rather than one rectangular array; these helpers
normalize and check that shape family.
"""

import numpy as np

from .errors import ShapeError


def check_feature_list(X, min_frames: int = 1) -> list[np.ndarray]:
    """Validate a list of 2-D float feature matrices sharing one bin count."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = [X]
    mats = []
    for i, mat in enumerate(X):
        mat = np.asarray(mat, dtype=np.float32)
        if mat.ndim != 2:
            raise ShapeError(f"X[{i}] must be a 2-D frames x bins matrix, got shape {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise ShapeError(f"X[{i}] contains non-finite values")
        if mat.shape[0] < min_frames:
            raise ShapeError(f"X[{i}] has {mat.shape[0]} frames, need >= {min_frames}")
        mats.append(mat)
    if not mats:
        raise ShapeError("X is empty")
    bins = mats[0].shape[1]
    for i, mat in enumerate(mats):
        if mat.shape[1] != bins:
            raise ShapeError(f"X[{i}] has {mat.shape[1]} bins but X[0] has {bins}")
    return mats


def check_single_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n:
        raise ShapeError(f"y must be 1-D with {n} entries, got shape {y.shape}")
    return y


def check_binary_matrix(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 2 or y.shape[0] != n:
        raise ShapeError(f"y must be a 2-D binary matrix with {n} rows, got shape {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ShapeError("multi-label y must contain only 0/1 entries")
    return y.astype(np.float32)
