"""Flat ``key = value`` experiment configuration.

Lines starting with ``#`` (and trailing ``# ...``) are comments. Every key
is optional; omitted keys take the defaults below. List-valued keys use
commas (``hidden_dims = 32,32``) and milestone lists use ``epoch:factor``
pairs (``base_milestones = 50:0.1,70:0.1``).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .backbone import BackboneConfig
from .errors import ConfigError, HyperFSCILError
from .hyper_rpl import RplLossConfig
from .hyperbolic import BallConfig
from .incremental import IncrementalLossConfig
from .protocol import ModelConfig
from .state import TrainConfig

SWEEPABLE = ("beta", "curvature", "tau", "threshold")


def _ints(text):
    text = text.strip()
    return tuple(int(v) for v in text.split(",")) if text else ()


def _milestones(text):
    text = text.strip()
    if not text:
        return ()
    pairs = []
    for item in text.split(","):
        epoch, _, factor = item.partition(":")
        pairs.append((int(epoch), float(factor)))
    return tuple(pairs)


def _format_ints(values):
    return ",".join(str(v) for v in values)


def _format_milestones(pairs):
    return ",".join(f"{e}:{f!r}" for e, f in pairs)


# key -> (parser, formatter, check, message)
_LIST_KEYS = {
    "hidden_dims": (_ints, _format_ints),
    "base_milestones": (_milestones, _format_milestones),
    "incremental_milestones": (_milestones, _format_milestones),
}

_CHECKS = {
    "beta": (lambda v: 0.0 <= v <= 1.0, "beta must lie in [0,1]"),
    "threshold": (lambda v: 0.0 <= v <= 1.0, "threshold must lie in [0,1]"),
    "curvature": (lambda v: v > 0, "curvature must be > 0"),
    "boundary_eps": (lambda v: 0 < v < 1, "boundary_eps must lie in (0,1)"),
    "lambda_open": (lambda v: v >= 0, "lambda_open must be >= 0"),
    "tau": (lambda v: v > 0, "tau must be > 0"),
    "eta": (lambda v: v >= 0, "eta must be >= 0"),
    "zeta_base": (lambda v: v >= 0, "zeta_base must be >= 0"),
    "num_points": (lambda v: v >= 1, "num_points must be >= 1"),
    "exemplar_budget": (lambda v: v >= 1, "exemplar_budget must be >= 1"),
    "pairs_per_epoch": (lambda v: v >= 0, "pairs_per_epoch must be >= 0 (0 means batch size)"),
    "embed_dim": (lambda v: v >= 2, "embed_dim must be >= 2"),
    "hidden_dims": (lambda v: all(h >= 1 for h in v), "hidden_dims must be positive"),
    "batch_size": (lambda v: v >= 1, "batch_size must be >= 1"),
    "momentum": (lambda v: 0.0 <= v < 1.0, "momentum must lie in [0,1)"),
    "weight_decay": (lambda v: v >= 0, "weight_decay must be >= 0"),
    "max_grad_norm": (lambda v: v >= 0, "max_grad_norm must be >= 0 (0 disables clipping)"),
    "base_epochs": (lambda v: v >= 0, "base_epochs must be >= 0"),
    "incremental_epochs": (lambda v: v >= 0, "incremental_epochs must be >= 0"),
    "base_lr": (lambda v: v >= 0, "base_lr must be >= 0"),
    "incremental_lr": (lambda v: v >= 0, "incremental_lr must be >= 0"),
    "nme_space": (lambda v: v in ("euclidean", "hyperbolic"), "nme_space must be euclidean or hyperbolic"),
    "num_classes": (lambda v: v >= 1, "num_classes must be >= 1"),
    "train_per_class": (lambda v: v >= 1, "train_per_class must be >= 1"),
    "test_per_class": (lambda v: v >= 1, "test_per_class must be >= 1"),
    "dim": (lambda v: v >= 1, "dim must be >= 1"),
    "separation": (lambda v: v >= 0, "separation must be >= 0"),
    "base_classes": (lambda v: v >= 1, "base_classes must be >= 1"),
    "ways": (lambda v: v >= 1, "ways must be >= 1"),
    "shots": (lambda v: v >= 1, "shots must be >= 1"),
    "sessions": (lambda v: v >= 0, "sessions must be >= 0"),
    "seed": (lambda v: v >= 0, "seed must be >= 0"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    # data
    dataset: str = "synthetic"
    num_classes: int = 10
    train_per_class: int = 50
    test_per_class: int = 20
    dim: int = 8
    separation: float = 8.0
    base_classes: int = 6
    ways: int = 2
    shots: int = 5
    sessions: int = 2
    # geometry
    curvature: float = 0.1
    boundary_eps: float = 1e-5
    # base branch
    beta: float = 0.7
    lambda_open: float = 0.1
    threshold: float = 0.75
    num_points: int = 1
    # novel branch
    tau: float = 1.0
    eta: float = 1.0
    zeta_base: float = 1.0
    pairs_per_epoch: int = 0
    exemplar_budget: int = 5
    nme_space: str = "euclidean"
    metric_start_session: int = 4
    metric_start_epoch: int = 20
    # network and optimisation
    hidden_dims: tuple = (32,)
    embed_dim: int = 16
    frozen_prefix_layers: int = 1
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
    # run
    seed: int = 0
    output_dir: str = "results"

    @property
    def gamma(self):
        return 1.0 - self.beta

    @classmethod
    def from_mapping(cls, mapping):
        """Build a validated config from raw strings or already-typed values."""
        known = {f.name: f for f in fields(cls)}
        values = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown key '{key}'")
            values[key] = _convert(key, known[key], raw)
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def replace(self, **changes):
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self):
        for key, (check, message) in _CHECKS.items():
            if not check(getattr(self, key)):
                raise ConfigError(f"{key}: {message}")
        if self.frozen_prefix_layers > len(self.hidden_dims) + 1 or self.frozen_prefix_layers < 0:
            raise ConfigError("frozen_prefix_layers: exceeds the number of backbone layers")
        try:
            self.model_config(self.dim)
        except HyperFSCILError as exc:
            raise ConfigError(str(exc)) from None

    def to_mapping(self):
        """Plain JSON-friendly values that :meth:`from_mapping` accepts back."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in _LIST_KEYS:
                value = _LIST_KEYS[f.name][1](value)
            out[f.name] = value
        return out

    def to_text(self):
        return "".join(f"{k} = {v}\n" for k, v in self.to_mapping().items())

    def model_config(self, input_dim):
        return ModelConfig(
            backbone=BackboneConfig(
                input_dim=input_dim,
                hidden_dims=self.hidden_dims,
                embed_dim=self.embed_dim,
                frozen_prefix_layers=self.frozen_prefix_layers,
            ),
            ball=BallConfig(self.curvature, self.boundary_eps),
            rpl=RplLossConfig(self.beta, self.lambda_open, self.threshold, self.num_points),
            incremental=IncrementalLossConfig(
                tau=self.tau,
                eta=self.eta,
                zeta_base=self.zeta_base,
                pairs_per_epoch=self.pairs_per_epoch or None,
                exemplar_budget=self.exemplar_budget,
                nme_space=self.nme_space,
            ),
            train=TrainConfig(
                base_epochs=self.base_epochs,
                base_lr=self.base_lr,
                base_milestones=self.base_milestones,
                incremental_epochs=self.incremental_epochs,
                incremental_lr=self.incremental_lr,
                incremental_milestones=self.incremental_milestones,
                weight_decay=self.weight_decay,
                momentum=self.momentum,
                batch_size=self.batch_size,
                max_grad_norm=self.max_grad_norm or None,
                metric_start_session=self.metric_start_session,
                metric_start_epoch=self.metric_start_epoch,
            ),
        )


def _convert(key, f, raw):
    if not isinstance(raw, str):
        if key in _LIST_KEYS:
            raw = raw if isinstance(raw, (tuple, list)) else str(raw)
            if isinstance(raw, (tuple, list)):
                return tuple(tuple(v) if isinstance(v, (tuple, list)) else v for v in raw)
        elif f.type == "float" and isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return float(raw)
        elif f.type == "int" and isinstance(raw, int) and not isinstance(raw, bool):
            return raw
        elif f.type == "str":
            return str(raw)
        else:
            raise ConfigError(f"{key}: expected {f.type}, got {raw!r}")
    text = raw.strip()
    try:
        if key in _LIST_KEYS:
            return _LIST_KEYS[key][0](text)
        if f.type == "int":
            return int(text)
        if f.type == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {f.type}") from None


def parse_config_text(text):
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key = key.strip()
        if key in mapping:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        mapping[key] = value.strip()
    return ExperimentConfig.from_mapping(mapping)


def parse_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)
