"""Deterministic mini-batch training loop."""

from __future__ import annotations

import numpy as np

from ..data import LabeledDataset, batches, rng_from_seed
from ..errors import EmptyInputError, ShapeError
from .layers import MlpSpec
from .model import TrainedModel, init_params
from .ops import TRAIN, apply_bn_updates, backward, forward
from .optim import OptimizerState, TrainConfig, optimizer_step


def train(data: LabeledDataset, spec: MlpSpec, config: TrainConfig) -> TrainedModel:
    """Train a fresh model on the dataset.

    One generator seeded from config.seed drives initialization and dropout
    masks; batch shuffling is seeded per epoch inside batches(). The result
    is bit-identical across runs with the same data, spec and config.
    """
    if data.n == 0:
        raise EmptyInputError("cannot train on an empty dataset")
    if data.dim != spec.in_dim:
        raise ShapeError(f"dataset is {data.dim}-dimensional, network expects {spec.in_dim}")
    if int(data.labels.max()) >= spec.out_dim:
        raise ShapeError(
            f"labels reach {int(data.labels.max())} but network has {spec.out_dim} outputs"
        )
    if config.class_weights is None:
        weights = np.ones(spec.out_dim)
    else:
        weights = np.asarray(config.class_weights, dtype=np.float64)
        if weights.shape != (spec.out_dim,):
            raise ShapeError("class_weights length must equal the output width")

    rng = rng_from_seed(config.seed)
    params = init_params(spec, rng)
    state = OptimizerState(params, config)
    for epoch in range(config.epochs):
        for idx in batches(data, config.batch_size, config.seed, epoch):
            probs, cache = forward(params, spec, data.features[idx], TRAIN, rng)
            apply_bn_updates(params, cache)
            grads = backward(cache, data.labels[idx], weights)
            optimizer_step(params, grads, config, state)
    return TrainedModel(spec, params)
