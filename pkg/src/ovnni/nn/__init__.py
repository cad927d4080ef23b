"""Minimal feed-forward network engine: layer specs, forward/backward passes,
weighted cross entropy, SGD/Adam and a deterministic training loop."""

from .layers import (
    BATCH_NORM,
    DENSE,
    DROPOUT,
    RELU,
    SOFTMAX_OUTPUT,
    LayerSpec,
    MlpSpec,
    mlp,
    with_output_width,
)
from .model import (
    BatchNormParams,
    DenseParams,
    ModelParams,
    TrainedModel,
    init_params,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
)
from .ops import (
    EVAL,
    MC_DROPOUT,
    TRAIN,
    BatchNormGrads,
    DenseGrads,
    ForwardCache,
    apply_bn_updates,
    backward,
    forward,
    penultimate_features,
    predict_proba,
    softmax_rows,
    weighted_ce_loss,
)
from .optim import ADAM, SGD, OptimizerState, TrainConfig, optimizer_step
from .train import train

__all__ = [
    "ADAM", "BATCH_NORM", "BatchNormGrads", "BatchNormParams", "DENSE", "DROPOUT",
    "DenseGrads", "DenseParams", "EVAL", "ForwardCache", "LayerSpec", "MC_DROPOUT",
    "MlpSpec", "ModelParams", "OptimizerState", "RELU", "SGD", "SOFTMAX_OUTPUT",
    "TRAIN", "TrainConfig", "TrainedModel", "apply_bn_updates", "backward", "forward",
    "init_params", "load_model", "mlp", "model_from_dict", "model_to_dict",
    "optimizer_step", "penultimate_features", "predict_proba", "save_model",
    "softmax_rows", "train", "weighted_ce_loss", "with_output_width",
]
