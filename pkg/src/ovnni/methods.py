"""Confidence methods: the OVA*AVA score fusion and the baselines it is
compared against (maximum class probability, deep ensembles, MC dropout,
winner-takes-all over the one-vs-all heads).

The fused score for class j multiplies the j-th binary head's positive
probability by the multi-class model's probability for j. The products live
in [0, 1] per class but do not form a simplex row; confidence is their max.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import LabeledDataset, make_ova, rng_from_seed
from .errors import ConfigError, ShapeError
from .nn import (
    MC_DROPOUT,
    MlpSpec,
    TrainConfig,
    TrainedModel,
    forward,
    load_model,
    predict_proba,
    save_model,
    train,
    with_output_width,
)


@dataclass
class OvnniBundle:
    """One all-vs-all model plus one binary one-vs-all model per class."""

    ava: TrainedModel
    ova: list[TrainedModel]
    seeds: dict | None = None

    def __post_init__(self):
        if len(self.ova) != self.ava.spec.out_dim:
            raise ShapeError(
                f"need one binary model per class: got {len(self.ova)} "
                f"for {self.ava.spec.out_dim} classes"
            )
        for j, m in enumerate(self.ova):
            if m.spec.in_dim != self.ava.spec.in_dim:
                raise ShapeError(f"binary model {j} has a different input width")
            if m.spec.out_dim != 2:
                raise ShapeError(f"binary model {j} must have exactly 2 outputs")

    @property
    def n_label(self) -> int:
        return self.ava.spec.out_dim


def train_bundle(data: LabeledDataset, spec: MlpSpec, config: TrainConfig) -> OvnniBundle:
    """Train the all-vs-all model with plain cross entropy and one weighted
    binary model per class.

    Seeds: the multi-class model uses config.seed, binary model j uses
    config.seed + 1 + j.
    """
    if data.n_label < 2:
        raise ValueError("need at least 2 classes")
    ava = train(data, spec, replace(config, class_weights=None))
    binary_spec = with_output_width(spec, 2)
    ova = []
    for j in range(data.n_label):
        ova_data = make_ova(data, j)
        cfg = replace(config, seed=config.seed + 1 + j, class_weights=ova_data.class_weights)
        ova.append(train(ova_data.to_dataset(), binary_spec, cfg))
    seeds = {"ava": config.seed,
             "ova": [config.seed + 1 + j for j in range(data.n_label)]}
    return OvnniBundle(ava, ova, seeds)


def ova_positive_probs(ova_models, inputs: np.ndarray) -> np.ndarray:
    """(n, k) matrix of each binary head's positive-class probability."""
    if not ova_models:
        raise ValueError("need at least one binary model")
    return np.column_stack([predict_proba(m, inputs)[:, 1] for m in ova_models])


def ovnni_scores(bundle: OvnniBundle, inputs: np.ndarray) -> np.ndarray:
    """Per-class fused scores p_j = P(binary j positive) * P(class j)."""
    ava_probs = predict_proba(bundle.ava, inputs)
    return ova_positive_probs(bundle.ova, inputs) * ava_probs


def confidence(p: np.ndarray) -> np.ndarray | float:
    """Max score across classes; scalar for a single score vector."""
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0:
        raise ValueError("empty score vector")
    out = p.max(axis=-1)
    return float(out) if out.ndim == 0 else out


def predict(p: np.ndarray) -> np.ndarray | int:
    """Argmax class, ties broken toward the lowest index."""
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0:
        raise ValueError("empty score vector")
    out = p.argmax(axis=-1)
    return int(out) if out.ndim == 0 else out


def mcp(probs: np.ndarray):
    """Maximum class probability baseline: (confidence, class) per row."""
    return confidence(probs), predict(probs)


def deep_ensemble_probs(models, inputs: np.ndarray) -> np.ndarray:
    """Mean of the member softmax outputs; rows stay on the simplex."""
    models = list(models)
    if not models:
        raise ValueError("ensemble needs at least one member")
    width = models[0].spec.out_dim
    for m in models[1:]:
        if m.spec.out_dim != width:
            raise ShapeError("ensemble members disagree on output width")
    acc = predict_proba(models[0], inputs)
    for m in models[1:]:
        acc = acc + predict_proba(m, inputs)
    return acc / len(models)


def mc_dropout_probs(model: TrainedModel, inputs: np.ndarray, passes: int,
                     seed: int) -> np.ndarray:
    """Mean softmax over dropout-active forward passes (batch norm keeps its
    running statistics). Deterministic per seed."""
    if passes < 1:
        raise ValueError("passes must be >= 1")
    if not model.spec.has_dropout:
        raise ConfigError("mc_dropout_probs needs a model with dropout layers")
    rng = rng_from_seed(seed)
    acc = None
    for _ in range(passes):
        probs, _ = forward(model.params, model.spec, inputs, MC_DROPOUT, rng)
        acc = probs if acc is None else acc + probs
    return acc / passes


def ova_only(ova_models, inputs: np.ndarray):
    """Winner-takes-all over the binary heads: (confidence, class) per row."""
    positives = ova_positive_probs(ova_models, inputs)
    return confidence(positives), predict(positives)


# -- bundle persistence -------------------------------------------------------

BUNDLE_MANIFEST = "bundle.json"


def save_bundle(bundle: OvnniBundle, directory) -> list[Path]:
    """Write ava.json, ova_<j>.json and a manifest; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    ava_path = directory / "ava.json"
    save_model(bundle.ava, ava_path)
    paths.append(ava_path)
    for j, m in enumerate(bundle.ova):
        p = directory / f"ova_{j}.json"
        save_model(m, p)
        paths.append(p)
    manifest = {
        "n_label": bundle.n_label,
        "input_dim": bundle.ava.spec.in_dim,
        "seeds": bundle.seeds,
        "ava": "ava.json",
        "ova": [f"ova_{j}.json" for j in range(bundle.n_label)],
    }
    manifest_path = directory / BUNDLE_MANIFEST
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    paths.append(manifest_path)
    return paths


def load_bundle(directory) -> OvnniBundle:
    directory = Path(directory)
    with open(directory / BUNDLE_MANIFEST) as fh:
        manifest = json.load(fh)
    ava = load_model(directory / manifest["ava"])
    ova = [load_model(directory / name) for name in manifest["ova"]]
    return OvnniBundle(ava, ova, manifest.get("seeds"))
