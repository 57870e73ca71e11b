"""Poincare ball operations.

All functions work on the last axis and broadcast over leading axes. They
accept plain arrays (validated, evaluated in float64) or :class:`DiffValue`
nodes, in which case the result is a differentiable graph node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffmath as dm
from .diffmath import ARTANH_CLAMP, DiffValue
from .errors import DomainError, InvalidInputError, ShapeError

MIN_NORM = 1e-15


@dataclass(frozen=True)
class BallConfig:
    """Curvature ``c`` of the ball and the radial safety margin near its boundary."""

    curvature: float = 0.1
    boundary_eps: float = 1e-5

    def __post_init__(self):
        if not self.curvature > 0:
            raise InvalidInputError(f"curvature must be > 0, got {self.curvature}")
        if not 0 < self.boundary_eps < 1:
            raise InvalidInputError(f"boundary_eps must lie in (0, 1), got {self.boundary_eps}")

    @property
    def max_norm(self):
        """Largest Euclidean norm a stored point may have."""
        return (1.0 - self.boundary_eps) / np.sqrt(self.curvature)


class _NumpyOps:
    """numpy twins of the diffmath functions used below."""

    sqrt = staticmethod(np.sqrt)
    tanh = staticmethod(np.tanh)

    @staticmethod
    def arctanh(z):
        z = np.clip(z, -ARTANH_CLAMP, ARTANH_CLAMP)
        return 0.5 * np.log((1.0 + z) / (1.0 - z))

    @staticmethod
    def clamp_min(x, lower):
        return np.maximum(x, lower)

    @staticmethod
    def minimum(x, upper):
        return np.minimum(x, upper)


def _ops(*xs):
    return dm if any(isinstance(x, DiffValue) for x in xs) else _NumpyOps


def _check(x, what="input"):
    if isinstance(x, DiffValue):
        return x
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        raise ShapeError(f"{what} must be a vector, got a scalar")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{what} has non-finite components")
    return x


def _check_pair(x, y):
    x, y = _check(x, "x"), _check(y, "y")
    if x.shape[-1] != y.shape[-1]:
        raise ShapeError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    return x, y


def _sq_norm(x):
    return (x * x).sum(axis=-1, keepdims=True)


def _require_in_ball(x, ball):
    values = x.value if isinstance(x, DiffValue) else x
    if np.any(ball.curvature * np.sum(values * values, axis=-1) >= 1.0):
        raise DomainError("point lies outside the Poincare ball")


def project_to_ball(x, ball):
    """Radially shrink points whose norm exceeds ``ball.max_norm``; others pass through."""
    x = _check(x)
    ops = _ops(x)
    norm = ops.sqrt(ops.clamp_min(_sq_norm(x), MIN_NORM**2))
    if ops is _NumpyOps:
        return np.where(norm > ball.max_norm, x / norm * ball.max_norm, x)
    factor = ops.minimum(ball.max_norm / norm, 1.0)
    return x * factor


def mobius_add(x, y, ball):
    """Mobius addition ``x (+)_c y`` projected back into the ball."""
    x, y = _check_pair(x, y)
    c = ball.curvature
    xy = (x * y).sum(axis=-1, keepdims=True)
    x2 = _sq_norm(x)
    y2 = _sq_norm(y)
    num = (1 + 2 * c * xy + c * y2) * x + (1 - c * x2) * y
    den = 1 + 2 * c * xy + c * c * x2 * y2
    return project_to_ball(num / den, ball)


def conformal_factor(x, ball):
    """``2 / (1 - c |x|^2)``; at least 2 everywhere in the ball."""
    x = _check(x)
    _require_in_ball(x, ball)
    out = 2.0 / (1.0 - ball.curvature * _sq_norm(x))
    return out[..., 0] if not isinstance(out, DiffValue) else out.sum(axis=-1)


def poincare_distance(x, y, ball):
    """Geodesic distance ``(2/sqrt(c)) artanh(sqrt(c) |(-x) (+)_c y|)``.

    Examples
    --------
    >>> round(float(poincare_distance([0.0, 0.0], [0.6, 0.0], BallConfig(1.0))), 7)
    1.3862944
    """
    x, y = _check_pair(x, y)
    ops = _ops(x, y)
    sqrt_c = np.sqrt(ball.curvature)
    diff = mobius_add(-x, y, ball)
    norm = ops.sqrt(ops.clamp_min(_sq_norm(diff), MIN_NORM**2))
    dist = 2.0 / sqrt_c * ops.arctanh(sqrt_c * norm)
    if ops is _NumpyOps:
        # identical points give exactly zero rather than rounding residue
        dist = np.where(np.all(x == y, axis=-1, keepdims=True), 0.0, dist)
        return dist[..., 0]
    return dist.sum(axis=-1)


def exp_map_origin(v, ball):
    """Map a tangent vector at the origin onto the ball."""
    v = _check(v)
    ops = _ops(v)
    sqrt_c = np.sqrt(ball.curvature)
    norm = ops.sqrt(ops.clamp_min(_sq_norm(v), MIN_NORM**2))
    out = ops.tanh(sqrt_c * norm) * v / (sqrt_c * norm)
    return project_to_ball(out, ball)


def log_map_origin(x, ball):
    """Inverse of :func:`exp_map_origin`."""
    x = _check(x)
    _require_in_ball(x, ball)
    ops = _ops(x)
    sqrt_c = np.sqrt(ball.curvature)
    norm = ops.sqrt(ops.clamp_min(_sq_norm(x), MIN_NORM**2))
    return ops.arctanh(sqrt_c * norm) * x / (sqrt_c * norm)
