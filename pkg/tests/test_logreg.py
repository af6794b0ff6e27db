import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from pumpdetect.models import LRModel, LRParams, model_from_dict, train_logreg
from pumpdetect.models.logreg import Standardizer, bfgs_minimize, loss_and_grad


def problem(seed, n=80, d=9):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, d))
    w = rng.standard_normal(d)
    y = (rng.random(n) < 1 / (1 + np.exp(-(Z @ w)))).astype(float)
    return Z, y, rng


def central_diff(f, theta, h=1e-6):
    g = np.empty_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_gradient_matches_finite_differences(seed, C):
    Z, y, rng = problem(seed)
    theta = rng.standard_normal(Z.shape[1] + 1)
    _, g = loss_and_grad(theta, Z, y, C)
    num = central_diff(lambda t: loss_and_grad(t, Z, y, C)[0], theta)
    np.testing.assert_allclose(g, num, rtol=1e-5, atol=1e-5)


def test_loss_hand_value():
    Z = np.array([[1.0], [-1.0]])
    y = np.array([1.0, 0.0])
    loss, g = loss_and_grad(np.array([0.0, 0.0]), Z, y, 1.0)
    assert loss == pytest.approx(2 * math.log(2))
    np.testing.assert_allclose(g, [-1.0, 0.0])
    loss2, _ = loss_and_grad(np.array([2.0, 0.0]), Z, y, 0.5)
    assert loss2 == pytest.approx(2 * math.log1p(math.exp(-2)) + 4.0)


def test_null_model_intercept_is_log_odds():
    rng = np.random.default_rng(0)
    X = np.ones((100, 3))  # zero-variance features standardize to zero
    y = np.zeros(100, bool)
    y[:20] = True
    rng.shuffle(y)
    m = train_logreg(X, y)
    assert np.all(m.standardizer.scale == 1.0)
    assert m.intercept == pytest.approx(math.log(20 / 80), abs=1e-6)
    np.testing.assert_allclose(m.weights, 0.0, atol=1e-9)


def test_matches_scipy_optimum():
    Z, y, _ = problem(11, n=200)
    C = 0.7
    fg = lambda t: loss_and_grad(t, Z, y, C)
    ours, info = bfgs_minimize(fg, np.zeros(10), 1e-8, 1000)
    ref = minimize(fg, np.zeros(10), jac=True, method="BFGS", options={"gtol": 1e-10})
    np.testing.assert_allclose(ours, ref.x, atol=1e-5)
    assert info.converged and info.final_loss <= info.initial_loss


def test_separable_weights_agree_with_grid_search():
    # one feature, perfectly separable: the penalty keeps w finite
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0, 0, 1, 1], bool)
    m = train_logreg(X, y, LRParams(C=1.0, tol=1e-10))
    Z = m.standardizer.transform(X)
    grid = np.linspace(0, 6, 6001)
    losses = [loss_and_grad(np.array([w, 0.0]), Z, y.astype(float), 1.0)[0] for w in grid]
    assert m.weights[0] == pytest.approx(grid[int(np.argmin(losses))], abs=2e-3)
    assert abs(m.intercept) < 1e-6
    assert list(m.predict(X)) == list(y)


def test_serialization_and_scores():
    Z, y, _ = problem(5)
    X = Z * 10 + 3
    m = train_logreg(X, y.astype(bool))
    back = model_from_dict(json.loads(json.dumps(m.to_dict())))
    assert isinstance(back, LRModel)
    np.testing.assert_array_equal(back.predict_proba(X), m.predict_proba(X))
    p = m.predict_proba(X)
    assert np.all((p > 0) & (p < 1))


def test_standardizer():
    X = np.array([[1.0, 5.0], [3.0, 5.0]])
    s = Standardizer.fit(X)
    np.testing.assert_allclose(s.transform(X), [[-1.0, 0.0], [1.0, 0.0]])


def test_bad_params():
    with pytest.raises(ValueError):
        LRParams(C=0)
