"""Empirical risk, Monte-Carlo excess risk and the RiskReport record."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.asarray(self.Y, dtype=float).reshape(-1)
        if Y.size == 0:
            raise ValueError("dataset must contain at least one sample")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]} entries")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class RiskReport:
    empirical_risk: float
    excess_risk: float
    excess_risk_stderr: float
    n_eval: int

    def __post_init__(self):
        if self.excess_risk_stderr < 0:
            raise ValueError("standard error must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "empirical_risk": self.empirical_risk,
            "excess_risk": self.excess_risk,
            "excess_risk_stderr": self.excess_risk_stderr,
            "n_eval": self.n_eval,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RiskReport":
        return cls(**json.loads(text))


def _predict(predictor, X):
    return np.asarray(predictor(X), dtype=float).reshape(-1)


def empirical_risk(predictor, data: Dataset) -> float:
    """Mean squared residual of ``predictor`` (vectorized over rows) on ``data``."""
    if data.n == 0:
        raise ValueError("empty dataset")
    resid = data.Y - _predict(predictor, data.X)
    return float(np.mean(resid * resid))


def excess_risk_mc(predictor, truth, input_sampler, m: int, rng=None):
    """Monte-Carlo estimate of E_X[(predictor(X) - truth(X))^2].

    ``input_sampler(m, rng)`` must return an (m, p) array of fresh inputs.
    Returns ``(estimate, stderr)`` where stderr is the sample standard error.
    """
    if m < 2:
        raise ValueError(f"need m >= 2 evaluation points, got {m}")
    rng = np.random.default_rng(rng)
    X = input_sampler(m, rng)
    return excess_risk_on(predictor, truth, X)


def excess_risk_on(predictor, truth, X):
    """Excess-risk estimate on fixed evaluation inputs ``X``."""
    d = _predict(predictor, X) - _predict(truth, X)
    sq = d * d
    m = sq.size
    if m < 2:
        raise ValueError(f"need m >= 2 evaluation points, got {m}")
    est = float(np.mean(sq))
    stderr = float(np.std(sq, ddof=1) / np.sqrt(m))
    return est, stderr


def risk_report(predictor, truth, data: Dataset, X_eval) -> RiskReport:
    est, se = excess_risk_on(predictor, truth, X_eval)
    return RiskReport(empirical_risk(predictor, data), est, se, int(len(X_eval)))


class LinearRisk:
    """Least-squares objective ``theta -> mean((Y - X theta)^2)``.

    A low-dimensional stand-in for :class:`~gibbsnet.net_core.NetworkRisk`
    with the same sampler-facing interface; with X = [[1]] and Y = [0] it is
    ``theta^2``.
    """

    def __init__(self, X, Y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.asarray(Y, dtype=float).reshape(-1)
        if X.shape[0] != Y.shape[0] or Y.size == 0:
            raise ValueError("X and Y must be nonempty with matching rows")
        self.X, self.Y = X, Y
        self.dim = X.shape[1]
        self.n_grad_evals = 0

    def value(self, theta) -> float:
        r = self.Y - self.X @ np.asarray(theta, dtype=float)
        return float(np.mean(r * r))

    def value_and_grad(self, theta) -> tuple[float, np.ndarray]:
        self.n_grad_evals += 1
        r = self.Y - self.X @ np.asarray(theta, dtype=float)
        return float(np.mean(r * r)), -2.0 / self.Y.size * (self.X.T @ r)
