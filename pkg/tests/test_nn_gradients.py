"""Analytic backprop versus central finite differences.

Random small stacks (up to 3 hidden layers, widths up to 8, batches up to 8)
are checked parameter by parameter. Train-mode checks differentiate through
the batch statistics; dropout layers are checked in eval mode (identity) and
in train mode with a reseeded mask stream so the loss stays deterministic.
"""

import numpy as np
import pytest

from oracles import central_diff_grads
from ovnni.data import rng_from_seed
from ovnni.errors import StaleCacheError
from ovnni.nn import (
    EVAL,
    TRAIN,
    BatchNormGrads,
    BatchNormParams,
    DenseGrads,
    DenseParams,
    backward,
    forward,
    init_params,
    mlp,
    weighted_ce_loss,
)

REL_TOL = 1e-4


def trainable_arrays(params):
    out = []
    for block in params.blocks:
        if isinstance(block, DenseParams):
            out.extend([block.weights, block.bias])
        elif isinstance(block, BatchNormParams):
            out.extend([block.gamma, block.beta])
    return out


def grad_arrays(grads):
    out = []
    for g in grads:
        if isinstance(g, DenseGrads):
            out.extend([g.weights, g.bias])
        elif isinstance(g, BatchNormGrads):
            out.extend([g.gamma, g.beta])
    return out


def _draw_net(rng, with_dropout, with_bn):
    n_hidden = int(rng.integers(1, 4))
    hidden = [int(rng.integers(2, 9)) for _ in range(n_hidden)]
    in_dim = int(rng.integers(2, 9))
    n_out = int(rng.integers(2, 5))
    rate = float(rng.uniform(0.1, 0.5)) if with_dropout else 0.0
    spec = mlp(in_dim, hidden, n_out, batch_norm=with_bn, dropout_rate=rate)
    params = init_params(spec, rng_from_seed(int(rng.integers(0, 2**32))))
    for block in params.blocks:
        if isinstance(block, DenseParams):
            block.bias[:] = 0.1 * rng.standard_normal(block.bias.size)
        elif isinstance(block, BatchNormParams):
            # non-trivial batch norm state so eval mode runs away from identity
            d = block.gamma.size
            block.gamma[:] = rng.uniform(0.5, 1.5, d)
            block.beta[:] = rng.standard_normal(d)
            block.running_mean[:] = rng.standard_normal(d)
            block.running_var[:] = rng.uniform(0.2, 2.0, d)
    n = int(rng.integers(1, 9))
    x = rng.standard_normal((n, in_dim))
    labels = rng.integers(0, n_out, size=n)
    weights = rng.uniform(0.2, 2.0, n_out)
    return spec, params, x, labels, weights


def _well_conditioned(spec, params, x, mode, mask_seed):
    """Reject configurations where finite differences are invalid: relu
    pre-activations at the kink or batch-norm columns with ~zero variance."""
    mask_rng = rng_from_seed(mask_seed) if mask_seed is not None else None
    h = x.copy()
    for i, layer in enumerate(spec.layers):
        block = params.blocks[i]
        if layer.kind == "dense":
            h = h @ block.weights.T + block.bias
        elif layer.kind == "relu":
            if np.abs(h).min() < 1e-3:
                return False
            h = np.maximum(h, 0.0)
        elif layer.kind == "dropout":
            if mode == TRAIN and layer.dropout_rate > 0.0:
                keep = mask_rng.random(h.shape) >= layer.dropout_rate
                h = h * keep / (1.0 - layer.dropout_rate)
        elif layer.kind == "batch_norm":
            if mode == TRAIN:
                if h.shape[0] > 1 and h.var(axis=0).min() < 1e-2:
                    return False
                mu, var = h.mean(axis=0), h.var(axis=0)
            else:
                mu, var = block.running_mean, block.running_var
            h = block.gamma * (h - mu) / np.sqrt(var + block.epsilon) + block.beta
    return True


def random_net(rng, with_dropout=False, with_bn=True, mode=TRAIN, mask_seed=None):
    for _ in range(100):
        spec, params, x, labels, weights = _draw_net(rng, with_dropout, with_bn)
        if _well_conditioned(spec, params, x, mode, mask_seed):
            return spec, params, x, labels, weights
    raise RuntimeError("could not draw a well-conditioned network")


def check_gradients(spec, params, x, labels, weights, mode, mask_seed=None):
    def run_forward():
        rng = rng_from_seed(mask_seed) if mask_seed is not None else None
        return forward(params, spec, x, mode, rng)

    probs, cache = run_forward()
    analytic = grad_arrays(backward(cache, labels, weights))

    def loss():
        p, _ = run_forward()
        return weighted_ce_loss(p, labels, weights)

    numeric = central_diff_grads(loss, trainable_arrays(params))
    assert len(analytic) == len(numeric)
    for a, f in zip(analytic, numeric):
        rel = np.abs(a - f) / np.maximum(1.0, np.abs(f))
        assert rel.max() <= REL_TOL


def test_gradients_train_mode_random_networks():
    rng = np.random.default_rng(1234)
    for _ in range(12):
        spec, params, x, labels, weights = random_net(rng, with_bn=True, mode=TRAIN)
        check_gradients(spec, params, x, labels, weights, TRAIN)


def test_gradients_eval_mode_with_dropout_layers():
    rng = np.random.default_rng(99)
    for _ in range(8):
        spec, params, x, labels, weights = random_net(rng, with_dropout=True, mode=EVAL)
        check_gradients(spec, params, x, labels, weights, EVAL)


def test_gradients_train_mode_with_seeded_dropout():
    rng = np.random.default_rng(7)
    for _ in range(6):
        mask_seed = int(rng.integers(0, 2**32))
        spec, params, x, labels, weights = random_net(
            rng, with_dropout=True, mode=TRAIN, mask_seed=mask_seed)
        check_gradients(spec, params, x, labels, weights, TRAIN, mask_seed=mask_seed)


def test_zero_gradient_at_perfect_one_sample_batch():
    spec = mlp(2, [3], 2, batch_norm=False)
    params = init_params(spec, rng_from_seed(0))
    x = np.array([[5.0, -5.0]])
    # drive the logits so far apart the softmax saturates at the label
    params.blocks[2].weights[:] = [[100.0, 0.0, 0.0], [-100.0, 0.0, 0.0]]
    probs, cache = forward(params, spec, x, TRAIN)
    label = int(probs[0].argmax())
    grads = backward(cache, [label], np.ones(2))
    out_grads = grads[2]
    assert np.abs(out_grads.weights).max() < 1e-12
    assert np.abs(out_grads.bias).max() < 1e-12


def test_single_sample_weight_scaling_cancels():
    rng = np.random.default_rng(5)
    spec, params, x, labels, weights = random_net(rng)
    x, labels = x[:1], labels[:1]
    _, cache = forward(params, spec, x, TRAIN)
    g1 = grad_arrays(backward(cache, labels, weights))
    doubled = weights.copy()
    doubled[labels[0]] *= 2.0
    _, cache = forward(params, spec, x, TRAIN)
    g2 = grad_arrays(backward(cache, labels, doubled))
    for a, b in zip(g1, g2):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


def test_backward_rejects_mismatched_batch():
    spec = mlp(2, [3], 2)
    params = init_params(spec, rng_from_seed(0))
    _, cache = forward(params, spec, np.zeros((4, 2)), TRAIN)
    with pytest.raises(StaleCacheError):
        backward(cache, [0, 1], np.ones(2))
