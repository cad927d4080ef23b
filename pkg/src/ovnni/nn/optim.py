"""Training configuration and parameter updates (SGD and Adam)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericError
from .model import BatchNormParams, DenseParams, ModelParams
from .ops import BatchNormGrads, DenseGrads

SGD = "sgd"
ADAM = "adam"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = ADAM
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 20
    seed: int = 0
    class_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.optimizer not in (SGD, ADAM):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.class_weights is not None:
            cw = tuple(float(w) for w in self.class_weights)
            if any(w <= 0 for w in cw):
                raise ValueError("class_weights must be strictly positive")
            object.__setattr__(self, "class_weights", cw)


class OptimizerState:
    """First/second moment buffers per trainable array (Adam only) and the
    shared step counter."""

    def __init__(self, params: ModelParams, config: TrainConfig):
        self.t = 0
        self.moments = {}
        if config.optimizer == ADAM:
            for i, block in enumerate(params.blocks):
                for name, arr in _trainable(block):
                    self.moments[(i, name)] = (np.zeros_like(arr), np.zeros_like(arr))


def _trainable(block):
    if isinstance(block, DenseParams):
        return (("weights", block.weights), ("bias", block.bias))
    if isinstance(block, BatchNormParams):
        return (("gamma", block.gamma), ("beta", block.beta))
    return ()


def _grad_arrays(grad):
    if isinstance(grad, DenseGrads):
        return (("weights", grad.weights), ("bias", grad.bias))
    if isinstance(grad, BatchNormGrads):
        return (("gamma", grad.gamma), ("beta", grad.beta))
    return ()


def optimizer_step(params: ModelParams, grads: list, config: TrainConfig,
                   state: OptimizerState) -> tuple[ModelParams, OptimizerState]:
    """Apply one update in place; returns the same params/state for chaining."""
    for i, grad in enumerate(grads):
        for name, g in _grad_arrays(grad):
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient in layer {i} ({name})")
    state.t += 1
    lr = config.learning_rate
    for i, (block, grad) in enumerate(zip(params.blocks, grads)):
        param_arrays = dict(_trainable(block))
        for name, g in _grad_arrays(grad):
            theta = param_arrays[name]
            if config.optimizer == SGD:
                theta -= lr * g
            else:
                m, v = state.moments[(i, name)]
                m *= ADAM_BETA1
                m += (1 - ADAM_BETA1) * g
                v *= ADAM_BETA2
                v += (1 - ADAM_BETA2) * g * g
                m_hat = m / (1 - ADAM_BETA1 ** state.t)
                v_hat = v / (1 - ADAM_BETA2 ** state.t)
                theta -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params, state
