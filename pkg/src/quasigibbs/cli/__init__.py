"""Configuration ingestion, experiment orchestration, and CSV emission."""

from .config import ExperimentConfig, ModelSpec, load_config, config_hash, derive_seed
from .experiments import run_experiment, build_model_from_spec

__all__ = [
    "ExperimentConfig",
    "ModelSpec",
    "load_config",
    "config_hash",
    "derive_seed",
    "run_experiment",
    "build_model_from_spec",
]
