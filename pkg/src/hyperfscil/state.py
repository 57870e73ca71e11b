"""Training schedule settings and the mutable model state carried across sessions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class TrainConfig:
    """Epoch counts and SGD settings for the base and incremental phases."""

    base_epochs: int = 80
    base_lr: float = 0.1
    base_milestones: tuple = ((50, 0.1), (70, 0.1))
    incremental_epochs: int = 30
    incremental_lr: float = 0.01
    incremental_milestones: tuple = ()
    weight_decay: float = 5e-4
    momentum: float = 0.9
    batch_size: int = 32
    max_grad_norm: float = 1.0
    metric_start_session: int = 4
    metric_start_epoch: int = 20

    def __post_init__(self):
        for name in ("base_milestones", "incremental_milestones"):
            pairs = tuple((int(e), float(f)) for e, f in getattr(self, name))
            epochs = [e for e, _ in pairs]
            if any(b <= a for a, b in zip(epochs, epochs[1:])):
                raise ContractError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, pairs)
        if self.base_epochs < 0 or self.incremental_epochs < 0:
            raise ContractError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ContractError("momentum must lie in [0, 1)")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise ContractError("max_grad_norm must be > 0")
        if self.weight_decay < 0:
            raise ContractError("weight_decay must be >= 0")


@dataclass
class ModelState:
    """Everything the two-branch model needs at prediction time.

    The base branch (``base_params``: backbone, hyperbolic scale, reciprocal
    points and margins) is written once by the base session and never again.
    The novel branch is created on the first incremental session.
    """

    backbone: object
    ball: object
    rpl: object
    incremental: object
    train: TrainConfig
    base_params: object
    base_classes: list
    base_loss_history: list = field(default_factory=list)
    novel_params: object = None
    novel_classes: list = field(default_factory=list)
    memory: object = None
    old_params: object = None
    old_class_count: int = 0
    novel_loss_history: list = field(default_factory=list)
    sessions: list = field(default_factory=list)
    input_mean: object = 0.0
    input_scale: object = 1.0

    def normalize(self, x):
        """Standardize raw inputs with the statistics of the base training set."""
        return (np.asarray(x, dtype=np.float64) - self.input_mean) / self.input_scale

    def base_index(self, labels):
        """Map global class ids to reciprocal-point indices."""
        lookup = {c: i for i, c in enumerate(self.base_classes)}
        return np.array([lookup[int(c)] for c in labels], dtype=int)

    @property
    def seen_classes(self):
        return [c for s in self.sessions for c in s]
