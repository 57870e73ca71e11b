"""Base-session open-set classifier built on reciprocal points.

Each base class owns ``M`` learnable reciprocal points that model the space
*outside* the class, plus a learnable margin. A sample is scored against a
class by its integrated distance to that class's reciprocal points, a
weighted mix of mean squared Euclidean distance and mean Poincare distance
after both ends are mapped onto the ball. Larger distance means the sample
is more likely to belong to the class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffmath as dm
from .backbone import LOG_SCALE, HyperbolicHead, embed, freeze_prefix, init_params, to_hyperbolic
from .diffmath import DiffValue, ParameterStore, backward_grad, sgd_step
from .errors import ContractError, DatasetError, LabelError
from .hyperbolic import poincare_distance
from .state import ModelState

POINTS = "rpl.points"
MARGINS = "rpl.margins"
UNKNOWN = -1


@dataclass(frozen=True)
class RplLossConfig:
    """Distance mixing weight, open-space weight and rejection threshold.

    ``gamma`` is derived as ``1 - beta`` so the two weights always sum to one.
    """

    beta: float = 0.7
    lambda_open: float = 0.1
    threshold: float = 0.75
    num_points: int = 1

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ContractError("beta must lie in [0,1]")
        if self.lambda_open < 0:
            raise ContractError("lambda_open must be >= 0")
        if not 0.0 <= self.threshold <= 1.0:
            raise ContractError("threshold must lie in [0,1]")
        if self.num_points < 1:
            raise ContractError("num_points must be >= 1")

    @property
    def gamma(self):
        return 1.0 - self.beta


@dataclass
class ReciprocalPointSet:
    """``points`` has shape (K, M, d); ``margins`` has shape (K,).

    Either field may hold plain arrays or live :class:`DiffValue` parameters.
    """

    points: object
    margins: object

    def __post_init__(self):
        if self.points.ndim != 3:
            raise ContractError("points must have shape (classes, M, d)")
        if self.margins.shape != self.points.shape[:1]:
            raise ContractError("need exactly one margin per class")

    @property
    def num_classes(self):
        return self.points.shape[0]

    @property
    def num_points(self):
        return self.points.shape[1]

    @classmethod
    def from_params(cls, params):
        return cls(params[POINTS], params[MARGINS])

    @classmethod
    def initial(cls, num_classes, num_points, dim, rng):
        """Points drawn like backbone weights (std ``sqrt(2/dim)``), margins at 1."""
        points = rng.normal(0.0, np.sqrt(2.0 / dim), size=(num_classes, num_points, dim))
        return cls(points, np.ones(num_classes))


def _align(feature, points):
    """Reshape ``feature`` (..., d) so it broadcasts against ``points`` (..., M, d)."""
    shape = tuple(feature.shape[:-1]) + (1,) * (points.ndim - 1) + (feature.shape[-1],)
    return feature.reshape(shape)


def _check_points(feature, points):
    if points.shape[-2] == 0:
        raise ContractError("empty reciprocal point set")
    if feature.shape[-1] != points.shape[-1]:
        raise ContractError(f"feature dim {feature.shape[-1]} != point dim {points.shape[-1]}")


def _as_input(x):
    return x if isinstance(x, DiffValue) else np.asarray(x, dtype=np.float64)


def euclidean_rp_distance(feature, points):
    """Mean squared Euclidean distance to a point set.

    ``points`` is (M, d) for one class or (K, M, d) for all classes; the
    result drops the M axis, so a batch (B, d) against (K, M, d) gives (B, K).
    """
    feature, points = _as_input(feature), _as_input(points)
    _check_points(feature, points)
    diff = _align(feature, points) - points
    return (diff * diff).sum(axis=-1).mean(axis=-1)


def hyperbolic_rp_distance(feature, points, head):
    """Mean Poincare distance between the mapped feature and the mapped points."""
    feature, points = _as_input(feature), _as_input(points)
    _check_points(feature, points)
    hf = to_hyperbolic(feature, head)
    hp = to_hyperbolic(points, head)
    return poincare_distance(_align(hf, hp), hp, head.ball).mean(axis=-1)


def integrated_rp_distance(feature, points, head, cfg):
    """``beta * euclidean + gamma * hyperbolic``; a zero weight skips its branch entirely."""
    if cfg.gamma == 0.0:
        return cfg.beta * euclidean_rp_distance(feature, points)
    if cfg.beta == 0.0:
        return cfg.gamma * hyperbolic_rp_distance(feature, points, head)
    return cfg.beta * euclidean_rp_distance(feature, points) + cfg.gamma * hyperbolic_rp_distance(
        feature, points, head
    )


def class_probabilities(feature, points, head, cfg):
    """Softmax over integrated distances to every class's reciprocal points.

    Returns a plain array of shape (K,) or (B, K).
    """
    d = integrated_rp_distance(feature, points, head, cfg)
    return dm.softmax(d.value if isinstance(d, DiffValue) else d, axis=-1)


def classification_loss(feature, label, points, head, cfg):
    """``-log p(y = label | x)`` for one sample or a batch (then per-sample values)."""
    label = np.asarray(label, dtype=int)
    k = points.shape[0]
    if np.any((label < 0) | (label >= k)):
        raise LabelError(f"label outside base label set 0..{k - 1}")
    d = integrated_rp_distance(feature, points, head, cfg)
    logp = dm.log_softmax(dm.constant(d) if not isinstance(d, DiffValue) else d, axis=-1)
    if label.ndim == 0:
        return -logp[int(label)]
    return -logp[np.arange(len(label)), label]


def open_space_risk(feature, points_k, margin_k, head, cfg):
    """``(d(x, P_k) - R_k) ** 2`` for the class whose points are ``points_k`` (M, d)."""
    d = integrated_rp_distance(feature, points_k, head, cfg)
    r = margin_k if isinstance(margin_k, DiffValue) else np.asarray(margin_k, dtype=np.float64)
    gap = d - r
    return gap * gap


def base_loss(features, labels, rp, head, cfg):
    """Batch mean of classification loss plus ``lambda_open`` times open-space risk.

    ``features`` is (B, d), ``labels`` holds reciprocal-point indices.
    """
    labels = np.asarray(labels, dtype=int)
    if labels.size == 0:
        raise ContractError("empty batch")
    if np.any((labels < 0) | (labels >= rp.num_classes)):
        raise LabelError(f"label outside base label set 0..{rp.num_classes - 1}")
    if not isinstance(features, DiffValue):
        features = dm.constant(features)
    rows = np.arange(len(labels))
    d = integrated_rp_distance(features, rp.points, head, cfg)
    ce = -dm.log_softmax(d, axis=-1)[rows, labels]
    margins = rp.margins if isinstance(rp.margins, DiffValue) else dm.constant(rp.margins)
    gap = d[rows, labels] - margins[labels]
    return (ce + cfg.lambda_open * (gap * gap)).mean()


def decide_from_probabilities(probs, threshold):
    """Known class index when the top probability reaches ``threshold``, else ``UNKNOWN``."""
    probs = np.asarray(probs, dtype=np.float64)
    top = np.argmax(probs, axis=-1)
    keep = np.max(probs, axis=-1) >= threshold
    return np.where(keep, top, UNKNOWN)


def open_set_decide(feature, rp, head, cfg):
    """Reciprocal-point index for confident samples, ``UNKNOWN`` (-1) otherwise."""
    probs = class_probabilities(feature, _value(rp.points), head, cfg)
    out = decide_from_probabilities(probs, cfg.threshold)
    return int(out) if np.ndim(out) == 0 else out


def _value(x):
    return x.value if isinstance(x, DiffValue) else x


# base session training -------------------------------------------------


def _base_store(backbone_cfg, rpl_cfg, train_cfg, num_classes, seed):
    store = init_params(backbone_cfg, seed)
    rp = ReciprocalPointSet.initial(
        num_classes, rpl_cfg.num_points, backbone_cfg.embed_dim, np.random.default_rng([seed, 1])
    )
    store[POINTS] = rp.points
    store[MARGINS] = rp.margins
    store[LOG_SCALE] = np.array(0.0)
    store.base_lr = train_cfg.base_lr
    store.milestones = list(train_cfg.base_milestones)
    store.weight_decay = train_cfg.weight_decay
    store.momentum = train_cfg.momentum
    store.max_grad_norm = train_cfg.max_grad_norm
    return store


def base_batch_loss(params, x, labels, backbone_cfg, ball, cfg):
    """Base loss of raw inputs ``x`` through the network held in ``params``."""
    feats = embed(x, params, backbone_cfg)
    head = HyperbolicHead(ball, params[LOG_SCALE])
    return base_loss(feats, labels, ReciprocalPointSet.from_params(params), head, cfg)


def train_base_session(x, y, base_classes, backbone_cfg, ball, rpl_cfg, train_cfg, seed,
                       incremental_cfg=None):
    """Minibatch SGD on the base loss over the base classes.

    Returns a :class:`ModelState` whose base branch is complete. Class ids in
    ``y`` are global; ``base_classes`` fixes their reciprocal-point order.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    base_classes = [int(c) for c in base_classes]
    counts = {c: int(np.sum(y == c)) for c in base_classes}
    empty = [c for c, n in counts.items() if n == 0]
    if empty:
        raise DatasetError(f"base classes without training samples: {empty}")
    stray = sorted(set(np.unique(y).tolist()) - set(base_classes))
    if stray:
        raise LabelError(f"labels outside the base set: {stray}")

    params = _base_store(backbone_cfg, rpl_cfg, train_cfg, len(base_classes), seed)
    spread = x.std(axis=0)
    state = ModelState(
        backbone=backbone_cfg, ball=ball, rpl=rpl_cfg, incremental=incremental_cfg,
        train=train_cfg, base_params=params, base_classes=base_classes,
        sessions=[list(base_classes)],
        input_mean=x.mean(axis=0), input_scale=np.where(spread > 0, spread, 1.0),
    )
    x = state.normalize(x)
    labels = state.base_index(y)
    rng = np.random.default_rng([seed, 2])
    for epoch in range(train_cfg.base_epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(order), train_cfg.batch_size):
            idx = order[start:start + train_cfg.batch_size]
            loss = base_batch_loss(params, x[idx], labels[idx], backbone_cfg, ball, rpl_cfg)
            backward_grad(loss)
            sgd_step(params, epoch)
            total += float(loss.value) * len(idx)
        state.base_loss_history.append(total / len(y))
    freeze_prefix(params, backbone_cfg)
    # the whole base branch is read-only from here on
    params.frozen.update(params)
    return state


def base_probabilities(state, x):
    params = state.base_params
    feats = embed(state.normalize(x), params, state.backbone).value
    head = HyperbolicHead(state.ball, float(params[LOG_SCALE].value))
    return class_probabilities(feats, params[POINTS].value, head, state.rpl)


def base_decide(state, x, threshold=None):
    """Global class id per row of ``x``, or ``UNKNOWN`` below the threshold."""
    threshold = state.rpl.threshold if threshold is None else threshold
    idx = decide_from_probabilities(base_probabilities(state, x), threshold)
    classes = np.asarray(state.base_classes)
    return np.where(idx == UNKNOWN, UNKNOWN, classes[np.maximum(idx, 0)])


def evaluate_known_unknown(state, known_x, known_y, unknown_x, threshold=None):
    """(known accuracy, unknown accuracy) as fractions.

    A known sample counts when it is accepted with its true class; an
    unknown sample counts when it is rejected.
    """
    if len(known_y) == 0 or len(unknown_x) == 0:
        raise ContractError("known and unknown test sets must be non-empty")
    known_pred = base_decide(state, known_x, threshold)
    unknown_pred = base_decide(state, unknown_x, threshold)
    return known_unknown_accuracy(known_pred, known_y, unknown_pred)


def known_unknown_accuracy(known_pred, known_y, unknown_pred):
    known_pred, unknown_pred = np.asarray(known_pred), np.asarray(unknown_pred)
    if known_pred.size == 0 or unknown_pred.size == 0:
        raise ContractError("known and unknown test sets must be non-empty")
    known = float(np.mean(known_pred == np.asarray(known_y)))
    unknown = float(np.mean(unknown_pred == UNKNOWN))
    return known, unknown
