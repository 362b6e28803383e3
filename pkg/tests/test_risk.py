import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gibbsnet.risk import Dataset, LinearRisk, RiskReport, empirical_risk, excess_risk_mc, excess_risk_on


def _uniform(m, rng):
    return rng.random((m, 1))


def test_interpolation_has_zero_risk():
    data = Dataset([[0.0], [1.0]], [2.0, 5.0])
    assert empirical_risk(lambda X: 2 + 3 * X[:, 0], data) == 0.0


@pytest.mark.parametrize("X, Y, pred, expected", [
    ([[0.0], [1.0]], [1.0, -1.0], 0.0, 1.0),
    ([[0.4]], [3.0], 1.0, 4.0),
])
def test_empirical_risk_values(X, Y, pred, expected):
    assert empirical_risk(lambda Z: np.full(len(Z), pred), Dataset(X, Y)) == expected


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2))
    d = Dataset([[1, 2], [3, 4]], [0, 1])
    assert (d.n, d.p) == (2, 2)
    with pytest.raises(ValueError):
        d.X[0, 0] = 5


def test_excess_identical_predictor():
    est, se = excess_risk_mc(np.sin, np.sin, _uniform, 100, rng=0)
    assert est == 0.0 and se == 0.0


@given(st.floats(-3, 3))
def test_excess_constant(c):
    est, se = excess_risk_mc(lambda X: np.full(len(X), c), lambda X: np.zeros(len(X)), _uniform, 50, rng=1)
    assert est == pytest.approx(c * c, rel=1e-14, abs=0) and se <= 1e-14 * c * c


def test_excess_analytic_integral():
    est, se = excess_risk_mc(lambda X: np.zeros(len(X)), lambda X: X[:, 0], _uniform, 10**6, rng=2)
    assert abs(est - 1 / 3) <= 3 * se


def test_excess_needs_two_points():
    with pytest.raises(ValueError):
        excess_risk_mc(np.sin, np.cos, _uniform, 1)


def test_excess_deterministic_for_seed():
    args = (lambda X: X[:, 0] ** 2, lambda X: X[:, 0], _uniform, 1000)
    assert excess_risk_mc(*args, rng=5) == excess_risk_mc(*args, rng=5)


def test_empirical_risk_difference_estimates_excess():
    # E[R_n(f) - R_n(truth)] over fresh data equals the excess risk
    g = np.random.default_rng(9)
    truth = lambda X: np.sin(3 * X[:, 0])
    f = lambda X: 0.5 * X[:, 0]
    diffs = []
    for _ in range(400):
        X = g.random((200, 1))
        data = Dataset(X, truth(X) + 0.3 * g.standard_normal(200))
        diffs.append(empirical_risk(f, data) - empirical_risk(truth, data))
    diffs = np.array(diffs)
    est, se = excess_risk_mc(f, truth, _uniform, 200000, rng=10)
    combined = np.hypot(diffs.std(ddof=1) / np.sqrt(diffs.size), se)
    assert abs(diffs.mean() - est) <= 4 * combined


def test_report_json_roundtrip():
    r = RiskReport(0.1, 0.02, 0.001, 1000)
    assert RiskReport.from_json(r.to_json()) == r
    assert set(json.loads(r.to_json())) == {"empirical_risk", "excess_risk", "excess_risk_stderr", "n_eval"}
    with pytest.raises(ValueError):
        RiskReport(0.1, 0.0, -1.0, 3)


def test_excess_risk_on_fixed_points():
    X = np.array([[0.0], [1.0], [2.0]])
    est, se = excess_risk_on(lambda Z: Z[:, 0], lambda Z: np.zeros(len(Z)), X)
    assert est == pytest.approx(5 / 3)
    assert se == pytest.approx(np.std([0, 1, 4], ddof=1) / np.sqrt(3))


def test_linear_risk_gradient():
    g = np.random.default_rng(0)
    X, Y = g.standard_normal((8, 3)), g.standard_normal(8)
    obj = LinearRisk(X, Y)
    theta = g.standard_normal(3)
    r, grad = obj.value_and_grad(theta)
    h = 1e-6
    fd = [(obj.value(theta + h * e) - obj.value(theta - h * e)) / (2 * h) for e in np.eye(3)]
    np.testing.assert_allclose(grad, fd, rtol=1e-7)
    assert LinearRisk([[1.0]], [0.0]).value([0.5]) == 0.25
