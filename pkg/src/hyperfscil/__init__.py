"""Few-shot class-incremental learning with hyperbolic reciprocal points.

A frozen open-set base branch (reciprocal points scored by a mix of
Euclidean and Poincare-ball distances) routes rejected samples to a novel
branch trained with distillation, a hyperbolic pairwise metric loss and
nearest-mean-of-exemplars classification.
"""

from .config import ExperimentConfig, parse_config
from .data import FeatureDataset, generate_synthetic, load_csv_dataset, write_csv_dataset
from .errors import (
    ConfigError,
    ContractError,
    DatasetError,
    DomainError,
    HyperFSCILError,
    NumericalError,
    ProtocolError,
)
from .experiment import emit_results, run_experiment, run_sweep
from .hyperbolic import BallConfig
from .protocol import SessionReport, build_sessions, route_predict, run_protocol

__all__ = [
    "BallConfig",
    "ConfigError",
    "ContractError",
    "DatasetError",
    "DomainError",
    "ExperimentConfig",
    "FeatureDataset",
    "HyperFSCILError",
    "NumericalError",
    "ProtocolError",
    "SessionReport",
    "build_sessions",
    "emit_results",
    "generate_synthetic",
    "load_csv_dataset",
    "parse_config",
    "route_predict",
    "run_experiment",
    "run_protocol",
    "run_sweep",
    "write_csv_dataset",
]
