"""Deterministic federated-learning simulator with cluster-weighted robust aggregation."""

__version__ = "0.1.0"

from .aggregation import AggregatorKind, ClientUpdate, parse_aggregator
from .attacks import AttackConfig, parse_attack
from .data import Dataset, PartitionPlan
from .model import Batch, ModelSpec
from .orchestrator import ExperimentConfig, config_from_dict, load_config, run_experiment

__all__ = [
    "AggregatorKind", "AttackConfig", "Batch", "ClientUpdate", "Dataset",
    "ExperimentConfig", "ModelSpec", "PartitionPlan", "config_from_dict",
    "load_config", "parse_aggregator", "parse_attack", "run_experiment",
]
