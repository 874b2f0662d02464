"""Behavioral operations-management experiments played by language-model agents."""

from __future__ import annotations

__version__ = "0.1.0"

from .analysis import ReplicationVerdict, alignment, analyze, improvement_ratio, replicate
from .core import EXPERIMENT_IDS, ExperimentSpec, ResponseDataset, run_experiment, run_session
from .experiments import make_spec
from .sampling import SamplingConfig

__all__ = [
    "__version__",
    "EXPERIMENT_IDS",
    "ExperimentSpec",
    "ResponseDataset",
    "ReplicationVerdict",
    "SamplingConfig",
    "alignment",
    "analyze",
    "improvement_ratio",
    "make_spec",
    "replicate",
    "run_experiment",
    "run_session",
]
