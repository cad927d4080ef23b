"""Forward and backward passes through the layer stack, plus the loss.

Three forward modes:
  * "train":      dropout masks drawn, batch norm uses batch statistics and
                  stages running-stat updates into the cache;
  * "eval":       dropout is the identity, batch norm uses running statistics;
  * "mc_dropout": dropout masks drawn, batch norm keeps running statistics
                  (test-time sampling for dropout-based uncertainty).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyInputError, ShapeError, StaleCacheError
from .layers import BATCH_NORM, DENSE, DROPOUT, RELU, SOFTMAX_OUTPUT, MlpSpec
from .model import BatchNormParams, ModelParams, TrainedModel

TRAIN = "train"
EVAL = "eval"
MC_DROPOUT = "mc_dropout"

MODES = (TRAIN, EVAL, MC_DROPOUT)

# probabilities are clamped here before the log in the loss
LOG_CLAMP = 1e-12


@dataclass
class DenseGrads:
    weights: np.ndarray
    bias: np.ndarray


@dataclass
class BatchNormGrads:
    gamma: np.ndarray
    beta: np.ndarray


class ForwardCache:
    """Activation record produced by forward; consumed once by backward."""

    def __init__(self, spec, params, mode, n):
        self.spec = spec
        self.params = params
        self.mode = mode
        self.n = n
        self.records = []
        self.probs = None
        self.penultimate = None
        # staged (layer index, new running mean, new running var) updates
        self.bn_updates = []


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: ModelParams, spec: MlpSpec, inputs: np.ndarray, mode: str = EVAL,
            rng: np.random.Generator | None = None) -> tuple[np.ndarray, ForwardCache]:
    """Run the stack on a batch of rows and return (probabilities, cache)."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"inputs must be 2-D, got shape {x.shape}")
    if x.shape[0] == 0:
        raise EmptyInputError("forward pass on an empty batch")
    if x.shape[1] != spec.in_dim:
        raise ShapeError(f"inputs have {x.shape[1]} columns, network expects {spec.in_dim}")

    cache = ForwardCache(spec, params, mode, x.shape[0])
    last_dense = max((i for i, l in enumerate(spec.layers) if l.kind == DENSE), default=-1)
    for i, layer in enumerate(spec.layers):
        if i == last_dense:
            cache.penultimate = x
        block = params.blocks[i]
        if layer.kind == DENSE:
            cache.records.append(x)
            x = x @ block.weights.T + block.bias
        elif layer.kind == RELU:
            mask = x > 0
            cache.records.append(mask)
            x = x * mask
        elif layer.kind == BATCH_NORM:
            x, record = _batch_norm_forward(block, x, mode, cache, i)
            cache.records.append(record)
        elif layer.kind == DROPOUT:
            if mode in (TRAIN, MC_DROPOUT) and layer.dropout_rate > 0.0:
                if rng is None:
                    raise ValueError("dropout in train/mc_dropout mode needs an rng")
                keep = rng.random(x.shape) >= layer.dropout_rate
                scaled = keep / (1.0 - layer.dropout_rate)
                cache.records.append(scaled)
                x = x * scaled
            else:
                cache.records.append(None)
        else:  # softmax output
            x = softmax_rows(x)
            cache.records.append(None)
    cache.probs = x
    return x, cache


def _batch_norm_forward(block: BatchNormParams, x, mode, cache, layer_idx):
    if mode == TRAIN:
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        new_mean = (1.0 - block.momentum) * block.running_mean + block.momentum * mu
        new_var = (1.0 - block.momentum) * block.running_var + block.momentum * var
        cache.bn_updates.append((layer_idx, new_mean, new_var))
    else:
        mu = block.running_mean
        var = block.running_var
    inv = 1.0 / np.sqrt(var + block.epsilon)
    xhat = (x - mu) * inv
    return block.gamma * xhat + block.beta, (xhat, inv)


def apply_bn_updates(params: ModelParams, cache: ForwardCache) -> None:
    """Commit the running-statistic updates staged by a train-mode forward."""
    for idx, mean, var in cache.bn_updates:
        params.blocks[idx].running_mean = mean
        params.blocks[idx].running_var = var


def _check_labels_weights(n_out, labels, weights):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ShapeError("labels must be a 1-D vector")
    if labels.size and (labels.min() < 0 or labels.max() >= n_out):
        raise IndexError(f"labels must lie in [0, {n_out})")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (n_out,):
        raise ShapeError(f"need one weight per class, got shape {weights.shape}")
    if (weights <= 0).any():
        raise ValueError("class weights must be strictly positive")
    return labels, weights


def weighted_ce_loss(probs: np.ndarray, labels, weights) -> float:
    """Class-weighted cross entropy, normalized by the summed sample weights
    so uniform weights reduce to the plain batch mean."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ShapeError("probs must be 2-D")
    if probs.shape[0] == 0:
        raise EmptyInputError("loss of an empty batch")
    labels, weights = _check_labels_weights(probs.shape[1], labels, weights)
    if labels.shape[0] != probs.shape[0]:
        raise ShapeError("one label per probability row required")
    picked = np.clip(probs[np.arange(probs.shape[0]), labels], LOG_CLAMP, None)
    w = weights[labels]
    return float((w * -np.log(picked)).sum() / w.sum())


def backward(cache: ForwardCache, labels, weights) -> list:
    """Exact gradients of weighted_ce_loss w.r.t. every trainable parameter.

    Works on caches from any forward mode; train-mode caches differentiate
    through the batch statistics, eval-mode caches treat them as constants.
    """
    labels, weights = _check_labels_weights(cache.spec.out_dim, labels, weights)
    if labels.shape[0] != cache.n:
        raise StaleCacheError(
            f"cache holds {cache.n} rows but got {labels.shape[0]} labels"
        )
    if cache.probs is None:
        raise StaleCacheError("cache was not produced by a completed forward pass")

    n = cache.n
    w = weights[labels]
    scale = (w / w.sum())[:, None]
    delta = cache.probs.copy()
    delta[np.arange(n), labels] -= 1.0
    g = delta * scale

    grads: list = [None] * len(cache.spec.layers)
    for i in range(len(cache.spec.layers) - 1, -1, -1):
        layer = cache.spec.layers[i]
        record = cache.records[i]
        block = cache.params.blocks[i]
        if layer.kind == SOFTMAX_OUTPUT:
            continue  # g already holds the loss gradient at its input
        if layer.kind == DENSE:
            grads[i] = DenseGrads(g.T @ record, g.sum(axis=0))
            g = g @ block.weights
        elif layer.kind == RELU:
            g = g * record
        elif layer.kind == DROPOUT:
            if record is not None:
                g = g * record
        elif layer.kind == BATCH_NORM:
            xhat, inv = record
            grads[i] = BatchNormGrads((g * xhat).sum(axis=0), g.sum(axis=0))
            gx = g * block.gamma
            if cache.mode == TRAIN:
                g = inv * (gx - gx.mean(axis=0) - xhat * (gx * xhat).mean(axis=0))
            else:
                g = gx * inv
    return grads


def predict_proba(model: TrainedModel, inputs: np.ndarray) -> np.ndarray:
    """Eval-mode class probabilities, one simplex row per input row."""
    probs, _ = forward(model.params, model.spec, inputs, EVAL)
    return probs


def penultimate_features(model: TrainedModel, inputs: np.ndarray) -> np.ndarray:
    """Eval-mode activations entering the final dense layer."""
    _, cache = forward(model.params, model.spec, inputs, EVAL)
    return cache.penultimate
