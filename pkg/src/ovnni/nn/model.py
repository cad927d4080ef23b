"""Trainable parameters, initialization and JSON persistence.

Model files are plain JSON with every float rendered in shortest
round-trip decimal form, so load(save(m)) restores bit-identical arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from .layers import BATCH_NORM, DENSE, LayerSpec, MlpSpec

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1


@dataclass
class DenseParams:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray     # (out_dim,)


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = BN_EPSILON
    momentum: float = BN_MOMENTUM


@dataclass
class ModelParams:
    """Per-layer parameter blocks aligned with an MlpSpec; None for layers
    without state."""

    blocks: list = field(default_factory=list)

    def copy(self) -> "ModelParams":
        out = []
        for b in self.blocks:
            if isinstance(b, DenseParams):
                out.append(DenseParams(b.weights.copy(), b.bias.copy()))
            elif isinstance(b, BatchNormParams):
                out.append(BatchNormParams(b.gamma.copy(), b.beta.copy(),
                                           b.running_mean.copy(), b.running_var.copy(),
                                           b.epsilon, b.momentum))
            else:
                out.append(None)
        return ModelParams(out)


def init_params(spec: MlpSpec, rng: np.random.Generator) -> ModelParams:
    """He-scaled normal init for dense weights, zero biases, identity batch norm."""
    blocks = []
    for layer in spec.layers:
        if layer.kind == DENSE:
            scale = np.sqrt(2.0 / layer.in_dim)
            w = scale * rng.standard_normal((layer.out_dim, layer.in_dim))
            blocks.append(DenseParams(w, np.zeros(layer.out_dim)))
        elif layer.kind == BATCH_NORM:
            d = layer.in_dim
            blocks.append(BatchNormParams(np.ones(d), np.zeros(d), np.zeros(d), np.ones(d)))
        else:
            blocks.append(None)
    return ModelParams(blocks)


def check_params(spec: MlpSpec, params: ModelParams) -> None:
    if len(params.blocks) != len(spec.layers):
        raise ShapeError("parameter blocks do not align with the layer stack")
    for i, (layer, block) in enumerate(zip(spec.layers, params.blocks)):
        if layer.kind == DENSE:
            if not isinstance(block, DenseParams) or block.weights.shape != (
                layer.out_dim, layer.in_dim) or block.bias.shape != (layer.out_dim,):
                raise ShapeError(f"bad dense parameter shapes at layer {i}")
        elif layer.kind == BATCH_NORM:
            if not isinstance(block, BatchNormParams) or any(
                a.shape != (layer.in_dim,)
                for a in (block.gamma, block.beta, block.running_mean, block.running_var)
            ):
                raise ShapeError(f"bad batch norm parameter shapes at layer {i}")
            if (block.running_var <= 0).any():
                raise ValueError(f"running variance must stay positive at layer {i}")
        elif block is not None:
            raise ShapeError(f"layer {i} ({layer.kind}) carries no parameters")


@dataclass
class TrainedModel:
    spec: MlpSpec
    params: ModelParams

    def __post_init__(self):
        check_params(self.spec, self.params)


def _layer_to_dict(layer: LayerSpec) -> dict:
    d = {"kind": layer.kind, "in_dim": layer.in_dim, "out_dim": layer.out_dim}
    if layer.dropout_rate:
        d["dropout_rate"] = layer.dropout_rate
    return d


def _block_to_dict(block) -> dict | None:
    if block is None:
        return None
    if isinstance(block, DenseParams):
        return {"kind": DENSE, "weights": block.weights.tolist(), "bias": block.bias.tolist()}
    return {
        "kind": BATCH_NORM,
        "gamma": block.gamma.tolist(),
        "beta": block.beta.tolist(),
        "running_mean": block.running_mean.tolist(),
        "running_var": block.running_var.tolist(),
        "epsilon": block.epsilon,
        "momentum": block.momentum,
    }


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": "mlp-json-v1",
        "layers": [_layer_to_dict(l) for l in model.spec.layers],
        "params": [_block_to_dict(b) for b in model.params.blocks],
    }


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != "mlp-json-v1":
        raise ValueError(f"unknown model format {doc.get('format')!r}")
    layers = tuple(
        LayerSpec(d["kind"], d["in_dim"], d["out_dim"], d.get("dropout_rate", 0.0))
        for d in doc["layers"]
    )
    blocks = []
    for b in doc["params"]:
        if b is None:
            blocks.append(None)
        elif b["kind"] == DENSE:
            blocks.append(DenseParams(
                np.array(b["weights"], dtype=np.float64),
                np.array(b["bias"], dtype=np.float64),
            ))
        else:
            blocks.append(BatchNormParams(
                np.array(b["gamma"], dtype=np.float64),
                np.array(b["beta"], dtype=np.float64),
                np.array(b["running_mean"], dtype=np.float64),
                np.array(b["running_var"], dtype=np.float64),
                float(b["epsilon"]),
                float(b["momentum"]),
            ))
    return TrainedModel(MlpSpec(layers), ModelParams(blocks))


def save_model(model: TrainedModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> TrainedModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
