"""Feed-forward embedding network and the map from features onto the ball."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffmath as dm
from .diffmath import DiffValue, ParameterStore, constant
from .errors import ContractError, ShapeError
from .hyperbolic import BallConfig, exp_map_origin

LOG_SCALE = "hyp.log_scale"


@dataclass(frozen=True)
class BackboneConfig:
    input_dim: int
    hidden_dims: tuple = (32,)
    embed_dim: int = 16
    activation: str = "relu"
    frozen_prefix_layers: int = 0
    activate_output: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ContractError("input_dim must be >= 1")
        if self.embed_dim < 2:
            raise ContractError("embed_dim must be >= 2")
        if self.activation != "relu":
            raise ContractError(f"unsupported activation {self.activation!r}")
        if not 0 <= self.frozen_prefix_layers <= self.num_layers:
            raise ContractError(
                f"frozen_prefix_layers={self.frozen_prefix_layers} exceeds {self.num_layers} layers"
            )

    @property
    def num_layers(self):
        return len(self.hidden_dims) + 1

    @property
    def layer_dims(self):
        dims = (self.input_dim, *self.hidden_dims, self.embed_dim)
        return list(zip(dims[:-1], dims[1:]))


def layer_names(layer, prefix=""):
    return f"{prefix}W{layer}", f"{prefix}b{layer}"


def init_params(cfg, seed, prefix="", store=None):
    """He-normal weights (std ``sqrt(2 / fan_in)``) and zero biases.

    Parameters are added to ``store`` when given, otherwise to a fresh
    :class:`ParameterStore`.
    """
    rng = np.random.default_rng(seed)
    store = ParameterStore() if store is None else store
    for layer, (fan_in, fan_out) in enumerate(cfg.layer_dims):
        w, b = layer_names(layer, prefix)
        store[w] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        store[b] = np.zeros(fan_out)
    return store


def freeze_prefix(store, cfg, prefix=""):
    """Mark the first ``cfg.frozen_prefix_layers`` layers as frozen in ``store``."""
    for layer in range(cfg.frozen_prefix_layers):
        store.frozen.update(layer_names(layer, prefix))
    return store


def embed(x, params, cfg, prefix=""):
    """Forward pass through the affine + ReLU stack.

    The last layer stays linear unless ``cfg.activate_output`` is set.

    ``x`` is a single sample of shape ``(input_dim,)`` or a batch
    ``(B, input_dim)``. Returns a :class:`DiffValue`; take ``.value`` for a
    plain array.
    """
    if not isinstance(x, DiffValue):
        x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != cfg.input_dim:
        raise ShapeError(f"expected {cfg.input_dim} input features, got {x.shape[-1]}")
    h = constant(x)
    for layer in range(cfg.num_layers):
        w, b = layer_names(layer, prefix)
        h = h @ params[w] + params[b]
        if layer < cfg.num_layers - 1 or cfg.activate_output:
            h = dm.relu(h)
    return h


@dataclass
class HyperbolicHead:
    """Exponential map at the origin preceded by a learnable positive scale.

    The scale is stored as its logarithm; ``log_scale`` may be a float or the
    trainable :class:`DiffValue` from a parameter store.
    """

    ball: BallConfig = field(default_factory=BallConfig)
    log_scale: object = 0.0

    @property
    def scale(self):
        ls = self.log_scale
        return float(np.exp(ls.value)) if isinstance(ls, DiffValue) else float(np.exp(ls))

    def bind(self, params):
        """Head whose scale is the live parameter held in ``params``."""
        return HyperbolicHead(self.ball, params[LOG_SCALE])


def to_hyperbolic(v, head):
    """``exp_map_origin(scale * v)``; always inside the ball."""
    ls = head.log_scale
    scale = dm.exp(ls) if isinstance(ls, DiffValue) else float(np.exp(ls))
    if not isinstance(v, DiffValue):
        v = np.asarray(v, dtype=np.float64)
    return exp_map_origin(v * scale, head.ball)
