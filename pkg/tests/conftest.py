import numpy as np
import pytest

from maskpool.network import NetworkConfig, NetworkModel
from maskpool.numerics import Rng, grad_check


def projected_scalar(forward_fn, proj):
    """Turn a tensor-valued layer into a scalar function via a fixed random
    projection, so grad_check exercises every output element."""
    def f(_):
        return float(np.sum(forward_fn() * proj))
    return f


def input_grad_error(forward_fn, backward_fn, x, proj, eps=1e-5):
    """Max relative error of a layer's input gradient.

    ``forward_fn()`` must read ``x`` afresh on each call; grad_check
    perturbs ``x`` in place.
    """
    forward_fn()
    analytic = backward_fn(proj)
    return grad_check(projected_scalar(forward_fn, proj), x, eps, analytic)


def param_grad_error(forward_fn, backward_fn, param, proj, eps=1e-5):
    """Max relative error of a layer's gradient wrt one parameter tensor."""
    forward_fn()
    backward_fn(proj)
    analytic = param.grad.copy()
    return grad_check(projected_scalar(forward_fn, proj), param.data, eps, analytic)


def tiny_model(dtype=np.float64, seed=0, **overrides):
    """Small float64 network for gradient checks: 8 bins, 4 channels, one
    stride-2 layer (minimum input length 3)."""
    cfg = dict(input_bins=8, num_classes=3, channels=4, num_temporal_layers=1)
    cfg.update(overrides)
    return NetworkModel.build(NetworkConfig(**cfg), Rng(seed), dtype=dtype)


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)
