"""Experiment configuration: one JSON document, strictly validated.

Unknown keys are rejected outright so typos fail fast, and every validation
error names the offending field.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..nn import ADAM, SGD, TrainConfig

METHODS = ("MCP", "DeepEnsemble", "MCDropout", "OvaOnly", "OVNNI")

FAST_MODE_SAMPLES = 10_000
FAST_MODE_EPOCHS = 5


@dataclass(frozen=True)
class DataPaths:
    train_images: Path
    train_labels: Path
    test_images: Path
    test_labels: Path
    ood_images: Path
    ood_labels: Path | None = None


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 2
    image_size: int = 8
    n_train_per_class: int = 200
    n_test_per_class: int = 50
    n_ood: int = 100
    std: float = 0.02


@dataclass(frozen=True)
class ExperimentConfig:
    output_dir: Path
    paths: DataPaths | None = None
    hidden: tuple[int, ...] = (200, 200, 200)
    dropout_rate: float = 0.2
    train: TrainConfig = field(default_factory=TrainConfig)
    methods: tuple[str, ...] = METHODS
    ensemble_size: int = 5
    mc_passes: int = 5
    fast_mode: bool = False
    workers: int = 1
    synth: SynthSpec = field(default_factory=SynthSpec)

    def effective_epochs(self) -> int:
        return FAST_MODE_EPOCHS if self.fast_mode else self.train.epochs


def _reject_unknown(section: dict, allowed, where: str):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")


def _need(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return section[key]


def _typed(value, types, where: str):
    if not isinstance(value, types) or isinstance(value, bool) and bool not in (
            types if isinstance(types, tuple) else (types,)):
        names = types.__name__ if not isinstance(types, tuple) else "/".join(
            t.__name__ for t in types)
        raise ConfigError(f"{where}: expected {names}, got {type(value).__name__}")
    return value


def _parse_paths(section: dict) -> DataPaths:
    _reject_unknown(section, ("train_images", "train_labels", "test_images",
                              "test_labels", "ood_images", "ood_labels"), "paths")
    kwargs = {}
    for key in ("train_images", "train_labels", "test_images", "test_labels", "ood_images"):
        kwargs[key] = Path(_typed(_need(section, key, "paths"), str, f"paths.{key}"))
    if "ood_labels" in section:
        kwargs["ood_labels"] = Path(_typed(section["ood_labels"], str, "paths.ood_labels"))
    return DataPaths(**kwargs)


def _parse_train(section: dict) -> TrainConfig:
    _reject_unknown(section, ("optimizer", "learning_rate", "batch_size", "epochs",
                              "seed"), "train")
    kwargs = {}
    if "optimizer" in section:
        opt = _typed(section["optimizer"], str, "train.optimizer").lower()
        if opt not in (SGD, ADAM):
            raise ConfigError(f"train.optimizer: must be one of {SGD!r}, {ADAM!r}")
        kwargs["optimizer"] = opt
    if "learning_rate" in section:
        kwargs["learning_rate"] = float(
            _typed(section["learning_rate"], (int, float), "train.learning_rate"))
    for key in ("batch_size", "epochs", "seed"):
        if key in section:
            kwargs[key] = _typed(section[key], int, f"train.{key}")
    try:
        return TrainConfig(**kwargs)
    except ValueError as err:
        raise ConfigError(f"train: {err}") from err


def _parse_architecture(section: dict) -> tuple[tuple[int, ...], float]:
    _reject_unknown(section, ("hidden", "dropout_rate"), "architecture")
    hidden = (200, 200, 200)
    if "hidden" in section:
        raw = _typed(section["hidden"], list, "architecture.hidden")
        if not raw or not all(isinstance(h, int) and h >= 1 for h in raw):
            raise ConfigError("architecture.hidden: need a non-empty list of widths >= 1")
        hidden = tuple(raw)
    rate = 0.2
    if "dropout_rate" in section:
        rate = float(_typed(section["dropout_rate"], (int, float), "architecture.dropout_rate"))
        if not 0.0 <= rate < 1.0:
            raise ConfigError("architecture.dropout_rate: must lie in [0, 1)")
    return hidden, rate


def _parse_synth(section: dict) -> SynthSpec:
    _reject_unknown(section, ("n_classes", "image_size", "n_train_per_class",
                              "n_test_per_class", "n_ood", "std"), "synth")
    kwargs = {}
    for key in ("n_classes", "image_size", "n_train_per_class", "n_test_per_class", "n_ood"):
        if key in section:
            value = _typed(section[key], int, f"synth.{key}")
            if value < 1:
                raise ConfigError(f"synth.{key}: must be >= 1")
            kwargs[key] = value
    if "std" in section:
        std = float(_typed(section["std"], (int, float), "synth.std"))
        if std <= 0:
            raise ConfigError("synth.std: must be > 0")
        kwargs["std"] = std
    if kwargs.get("n_classes", 2) < 2:
        raise ConfigError("synth.n_classes: must be >= 2")
    return SynthSpec(**kwargs)


TOP_LEVEL_KEYS = ("paths", "architecture", "train", "methods", "ensemble_size",
                  "mc_passes", "output_dir", "fast_mode", "workers", "synth")


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a JSON object")
    _reject_unknown(doc, TOP_LEVEL_KEYS, "config")

    kwargs = {"output_dir": Path(_typed(_need(doc, "output_dir", "config"),
                                        str, "output_dir"))}
    if "paths" in doc:
        kwargs["paths"] = _parse_paths(_typed(doc["paths"], dict, "paths"))
    if "architecture" in doc:
        hidden, rate = _parse_architecture(_typed(doc["architecture"], dict, "architecture"))
        kwargs["hidden"], kwargs["dropout_rate"] = hidden, rate
    if "train" in doc:
        kwargs["train"] = _parse_train(_typed(doc["train"], dict, "train"))
    if "methods" in doc:
        raw = _typed(doc["methods"], list, "methods")
        if not raw:
            raise ConfigError("methods: need at least one method")
        for m in raw:
            if m not in METHODS:
                raise ConfigError(f"methods: unknown method {m!r}; choose from {METHODS}")
        kwargs["methods"] = tuple(dict.fromkeys(raw))
    for key in ("ensemble_size", "mc_passes", "workers"):
        if key in doc:
            value = _typed(doc[key], int, key)
            if value < 1:
                raise ConfigError(f"{key}: must be >= 1")
            kwargs[key] = value
    if "fast_mode" in doc:
        kwargs["fast_mode"] = _typed(doc["fast_mode"], bool, "fast_mode")
    if "synth" in doc:
        kwargs["synth"] = _parse_synth(_typed(doc["synth"], dict, "synth"))
    return ExperimentConfig(**kwargs)


def load_config(path, *, seed=None, output_dir=None, fast=False) -> ExperimentConfig:
    """Read and validate a config file, applying CLI overrides."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    config = parse_config(doc)
    if seed is not None:
        config = _replace(config, train=_replace(config.train, seed=seed))
    if output_dir is not None:
        config = _replace(config, output_dir=Path(output_dir))
    if fast:
        config = _replace(config, fast_mode=True)
    return config


def _replace(obj, **kwargs):
    from dataclasses import replace
    return replace(obj, **kwargs)


def config_hash(config: ExperimentConfig) -> str:
    """Stable digest of the fully resolved configuration."""

    def canon(value):
        if isinstance(value, Path):
            return str(value)
        if isinstance(value, tuple):
            return [canon(v) for v in value]
        if hasattr(value, "__dataclass_fields__"):
            return {k: canon(getattr(value, k)) for k in sorted(value.__dataclass_fields__)}
        return value

    blob = json.dumps(canon(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
