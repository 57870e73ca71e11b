import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperfscil import diffmath as dm
from hyperfscil.errors import DomainError, InvalidInputError, ShapeError
from hyperfscil.hyperbolic import (
    BallConfig,
    conformal_factor,
    exp_map_origin,
    log_map_origin,
    mobius_add,
    poincare_distance,
    project_to_ball,
)

C1 = BallConfig(1.0)


def _oracle_distance(x, y, c):
    # closed form via the cosh formula, independent of Mobius addition
    x, y = np.asarray(x, float), np.asarray(y, float)
    num = 2 * c * np.sum((x - y) ** 2)
    den = (1 - c * np.sum(x * x)) * (1 - c * np.sum(y * y))
    return math.acosh(1 + num / den) / math.sqrt(c)


def test_mobius_examples():
    y = np.array([0.3, -0.2])
    np.testing.assert_allclose(mobius_add(np.zeros(2), y, C1), y, atol=1e-15)
    np.testing.assert_allclose(mobius_add(y, -y, C1), 0.0, atol=1e-12)
    np.testing.assert_allclose(mobius_add([0.5, 0], [0.5, 0], C1), [0.8, 0.0], atol=1e-12)
    assert math.isclose(math.tanh(2 * math.atanh(0.5)), 0.8)


def test_conformal_factor():
    assert conformal_factor(np.zeros(3), BallConfig(0.1)) == pytest.approx(2.0)
    assert conformal_factor(np.array([0.5, 0.5]), C1) == pytest.approx(4.0)
    with pytest.raises(DomainError):
        conformal_factor(np.array([1.0, 0.0]), C1)


def test_distance_examples():
    x = np.array([0.2, -0.1])
    assert poincare_distance(x, x, C1) == 0.0
    assert poincare_distance(np.zeros(2), [0.6, 0], C1) == pytest.approx(math.log(4), abs=1e-12)
    small = poincare_distance([0.1, 0], [0.3, 0], BallConfig(1e-6))
    assert abs(small - 0.4) <= 1e-3


def test_exp_log_examples():
    np.testing.assert_array_equal(exp_map_origin(np.zeros(2), C1), 0.0)
    np.testing.assert_allclose(exp_map_origin([1.0, 0], C1), [math.tanh(1), 0], atol=1e-12)
    np.testing.assert_allclose(log_map_origin([math.tanh(1), 0], C1), [1, 0], atol=1e-9)
    np.testing.assert_array_equal(log_map_origin(np.zeros(2), C1), 0.0)


def test_project_examples():
    ball = BallConfig(1.0, 1e-5)
    np.testing.assert_allclose(project_to_ball([2.0, 0], ball), [1 - 1e-5, 0], atol=1e-15)
    inside = np.array([0.1, 0.2])
    np.testing.assert_array_equal(project_to_ball(inside, ball), inside)
    np.testing.assert_array_equal(project_to_ball(np.zeros(2), ball), 0.0)


def test_input_errors():
    with pytest.raises(InvalidInputError):
        poincare_distance([np.nan, 0], [0, 0], C1)
    with pytest.raises(ShapeError):
        mobius_add(np.zeros(2), np.zeros(3), C1)
    with pytest.raises(DomainError):
        log_map_origin([2.0, 0], C1)
    with pytest.raises(ValueError):
        BallConfig(0.0)


small_vec = st.lists(st.floats(-0.9, 0.9), min_size=3, max_size=3).map(np.array)


@settings(max_examples=200, deadline=None)
@given(small_vec, small_vec, st.sampled_from([0.1, 0.5, 1.0]))
def test_distance_matches_cosh_form(u, w, c):
    ball = BallConfig(c)
    x = exp_map_origin(u, ball)
    y = exp_map_origin(w, ball)
    assert poincare_distance(x, y, ball) == pytest.approx(_oracle_distance(x, y, c), rel=1e-7, abs=1e-7)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=4).map(np.array), st.sampled_from([0.1, 1.0]))
def test_log_inverts_exp(v, c):
    ball = BallConfig(c)
    np.testing.assert_allclose(log_map_origin(exp_map_origin(v, ball), ball), v, atol=1e-9)


def test_projection_keeps_points_inside():
    rng = np.random.default_rng(0)
    ball = BallConfig(0.5)
    pts = project_to_ball(rng.normal(scale=10, size=(500, 3)), ball)
    assert np.all(np.linalg.norm(pts, axis=1) <= ball.max_norm + 1e-12)


def test_differentiable_path_matches_numpy():
    rng = np.random.default_rng(1)
    u, w = rng.normal(size=(2, 4))
    ball = BallConfig(0.3)
    plain = poincare_distance(exp_map_origin(u, ball), exp_map_origin(w, ball), ball)
    traced = poincare_distance(exp_map_origin(dm.DiffValue(u), ball), exp_map_origin(dm.DiffValue(w), ball), ball)
    assert float(traced.value) == pytest.approx(float(plain), rel=1e-12)
