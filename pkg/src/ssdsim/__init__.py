"""Desk-scale federated unsupervised learning simulator.

Client-local self-supervised training (alignment + uniformity on the unit
hypersphere) extended with per-client dimension-scaled regularization and
projector distillation, federated averaging, and a representation-quality
metrics suite.
"""

from .config import RunSpec, parse_spec, serialize_spec
from .data import AugmentConfig, ClientPartition, Dataset
from .federation import FedConfig, RoundLog, run_training
from .losses import LossReport, LossWeights, ScalingVector
from .metrics import MetricsReport
from .model import ModelBundle

__all__ = [
    "AugmentConfig", "ClientPartition", "Dataset", "FedConfig",
    "LossReport", "LossWeights", "MetricsReport", "ModelBundle",
    "RoundLog", "RunSpec", "ScalingVector", "parse_spec",
    "run_training", "serialize_spec",
]
