"""Randomized small fixtures for checking every loss against finite differences."""

from __future__ import annotations

import numpy as np

from .backbone import LOG_SCALE, BackboneConfig, HyperbolicHead, init_params
from .diffmath import ParameterStore, finite_difference_check
from .hyper_rpl import (
    MARGINS,
    POINTS,
    ReciprocalPointSet,
    RplLossConfig,
    base_batch_loss,
    classification_loss,
    open_space_risk,
)
from .hyperbolic import BallConfig
from .incremental import (
    HEAD_B,
    HEAD_W,
    IncrementalBatch,
    IncrementalLossConfig,
    hyper_metric_loss,
    incremental_loss,
)

BALL = BallConfig(0.1)
RPL = RplLossConfig(beta=0.7, lambda_open=0.1)


def _head(params):
    return HyperbolicHead(BALL, params[LOG_SCALE])


def classification_fixture(seed, num_points=2):
    rng = np.random.default_rng(seed)
    params = ParameterStore({
        "feature": rng.normal(size=(4, 2)),
        POINTS: rng.normal(size=(3, num_points, 2)),
        LOG_SCALE: np.array(rng.normal(scale=0.3)),
    })
    labels = rng.integers(0, 3, size=4)

    def loss(p):
        return classification_loss(p["feature"], labels, p[POINTS], _head(p), RPL).mean()

    return loss, params


def open_space_fixture(seed, num_points=2):
    rng = np.random.default_rng(seed)
    params = ParameterStore({
        "feature": rng.normal(size=2),
        "points_k": rng.normal(size=(num_points, 2)),
        "margin_k": np.array(rng.uniform(0.5, 2.0)),
        LOG_SCALE: np.array(rng.normal(scale=0.3)),
    })

    def loss(p):
        return open_space_risk(p["feature"], p["points_k"], p["margin_k"], _head(p), RPL)

    return loss, params


def base_loss_fixture(seed, num_points=2):
    """Three classes, 2-d embedding, through a one-hidden-layer network."""
    rng = np.random.default_rng(seed)
    cfg = BackboneConfig(input_dim=3, hidden_dims=(4,), embed_dim=2)
    params = init_params(cfg, seed)
    rp = ReciprocalPointSet.initial(3, num_points, 2, rng)
    params[POINTS] = rp.points
    params[MARGINS] = rng.uniform(0.5, 2.0, size=3)
    params[LOG_SCALE] = np.array(rng.normal(scale=0.3))
    x = rng.normal(size=(6, 3))
    labels = rng.integers(0, 3, size=6)

    def loss(p):
        return base_batch_loss(p, x, labels, cfg, BALL, RPL)

    return loss, params


def metric_fixture(seed, pairs=2):
    rng = np.random.default_rng(seed)
    params = ParameterStore({
        "embeddings": rng.normal(size=(2 * pairs, 2)),
        LOG_SCALE: np.array(rng.normal(scale=0.3)),
    })
    cfg = IncrementalLossConfig(tau=1.0)

    def loss(p):
        return hyper_metric_loss(p["embeddings"], _head(p), cfg)

    return loss, params


def incremental_fixture(seed):
    """Two old and two new classes with distillation and metric terms active."""
    rng = np.random.default_rng(seed)
    cfg = BackboneConfig(input_dim=3, hidden_dims=(4,), embed_dim=2)
    params = init_params(cfg, seed)
    params[LOG_SCALE] = np.array(rng.normal(scale=0.3))
    params[HEAD_W] = rng.normal(size=(2, 4))
    params[HEAD_B] = rng.normal(scale=0.1, size=4)
    old = params.copy()
    for name in old:
        old[name] = old[name].value + rng.normal(scale=0.1, size=old[name].shape)
    batch = IncrementalBatch(
        x=rng.normal(size=(6, 3)), labels=rng.integers(0, 4, size=6), metric_x=rng.normal(size=(4, 3))
    )
    inc = IncrementalLossConfig(tau=1.0, eta=1.0, zeta_base=1.0)

    def loss(p):
        return incremental_loss(p, batch, inc, cfg, BALL, old_params=old, old_class_count=2)

    return loss, params


FIXTURES = {
    "classification_loss": classification_fixture,
    "open_space_risk": open_space_fixture,
    "base_loss": base_loss_fixture,
    "hyper_metric_loss": metric_fixture,
    "incremental_loss": incremental_fixture,
}


def run_gradient_suite(seeds=range(20), step=1e-5, tolerance=1e-4):
    """Worst relative error per loss over all seeds."""
    worst = {}
    for name, build in FIXTURES.items():
        for seed in seeds:
            loss, params = build(seed)
            report = finite_difference_check(loss, params, step=step, tolerance=tolerance)
            worst[name] = max(worst.get(name, 0.0), report.worst)
    return worst
