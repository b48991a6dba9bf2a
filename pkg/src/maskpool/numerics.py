"""Dense tensor helpers, explicit seeded randomness, and a finite-difference
gradient checker.

Tensors are plain ``numpy.ndarray`` values in row-major layout.  Network
tensors use (batch, depth, height, width) axis order.  Training runs in
float32; gradient checks require float64 because central differences lose
too many bits in single precision.
"""

from collections.abc import Callable

import numpy as np
import zlib

from .errors import NumericError, ShapeError

TRAIN_DTYPE = np.float32
CHECK_DTYPE = np.float64


def tensor_new(shape, fill: float = 0.0, dtype=TRAIN_DTYPE) -> np.ndarray:
    """Allocate a contiguous tensor of the given extents, filled with a
    constant.  Every extent must be >= 1."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise ShapeError(f"invalid tensor shape {shape}: all extents must be >= 1")
    return np.full(shape, fill, dtype=dtype)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Standard 2-D matrix product with explicit conformance checking."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul mismatch: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})")
    return a @ b


def _token_to_int(token) -> int:
    if isinstance(token, (int, np.integer)):
        return int(token) & 0xFFFFFFFF
    # crc32 rather than hash(): hash() is salted per process
    return zlib.crc32(str(token).encode("utf-8"))


class Rng:
    """Deterministic random generator threaded explicitly through every
    stochastic operation.

    Identical seeds produce bit-identical draw sequences.  ``child()``
    derives an independent stream from a key path (e.g. epoch and batch
    index), so shuffling and cropping stay reproducible regardless of how
    many draws earlier code consumed.
    """

    def __init__(self, seed: int, _key: tuple = ()):
        self.seed = int(seed)
        self._key = _key
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=_key))
        )

    def child(self, *tokens) -> "Rng":
        """Derive an independent, reproducible sub-stream keyed by tokens."""
        key = self._key + tuple(_token_to_int(t) for t in tokens)
        return Rng(self.seed, _key=key)

    def normal(self, shape, scale: float = 1.0, dtype=TRAIN_DTYPE) -> np.ndarray:
        return (self._gen.standard_normal(size=shape) * scale).astype(dtype)

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray | float:
        out = self._gen.uniform(low, high, size=shape)
        return float(out) if shape is None else out

    def integer(self, low: int, high_inclusive: int) -> int:
        """Uniform integer in [low, high_inclusive]."""
        return int(self._gen.integers(low, high_inclusive + 1))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def grad_check(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    eps: float,
    analytic_grad: np.ndarray,
) -> float:
    """Compare an analytic gradient against central finite differences.

    Returns the max over elements of ``|g_fd - g_an| / max(|g_fd|, |g_an|,
    1e-8)``.  Requires float64 input; central differences are unreliable in
    float32.
    """
    if x.dtype != np.float64:
        raise ShapeError(f"grad_check requires float64 input, got {x.dtype}")
    if analytic_grad.shape != x.shape:
        raise ShapeError(f"analytic grad shape {analytic_grad.shape} != x shape {x.shape}")
    g_fd = np.zeros_like(x)
    flat = x.reshape(-1)
    fd_flat = g_fd.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(f(x))
        flat[i] = orig - eps
        f_minus = float(f(x))
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite function value at element {i}")
        fd_flat[i] = (f_plus - f_minus) / (2.0 * eps)
    denom = np.maximum(np.maximum(np.abs(g_fd), np.abs(analytic_grad)), 1e-8)
    return float(np.max(np.abs(g_fd - analytic_grad) / denom))
