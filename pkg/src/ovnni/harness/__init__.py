"""Experiment harness: configuration, orchestration commands and the CLI."""

from .config import DataPaths, ExperimentConfig, SynthSpec, config_hash, load_config
from .runner import RunManifest, cmd_eval, cmd_synth, cmd_toy3, cmd_train

__all__ = [
    "DataPaths", "ExperimentConfig", "RunManifest", "SynthSpec", "cmd_eval",
    "cmd_synth", "cmd_toy3", "cmd_train", "config_hash", "load_config",
]
