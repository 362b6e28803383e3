"""The two posterior estimators: a single draw and the averaged kept draws."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net_core import NetworkArch, forward_clipped


@dataclass(frozen=True)
class PosteriorDraw:
    arch: NetworkArch
    theta: np.ndarray

    def __post_init__(self):
        if np.any(np.abs(self.theta) > self.arch.B):
            raise ValueError("posterior draw lies outside the parameter box")

    def __call__(self, x):
        return predict_draw(self, x)


@dataclass(frozen=True)
class PosteriorMean:
    arch: NetworkArch
    thetas: tuple

    def __post_init__(self):
        if len(self.thetas) < 1:
            raise ValueError("posterior mean needs at least one kept draw")
        object.__setattr__(self, "thetas", tuple(np.asarray(t, dtype=float) for t in self.thetas))

    @property
    def N(self) -> int:
        return len(self.thetas)

    def __call__(self, x):
        return predict_mean(self, x)


def predict_draw(draw: PosteriorDraw, x):
    return forward_clipped(draw.arch, draw.theta, x)


def predict_mean(mean: PosteriorMean, x):
    """Average of the clipped outputs of the kept draws."""
    total = None
    for theta in mean.thetas:
        f = forward_clipped(mean.arch, theta, x)
        total = f if total is None else total + f
    return total / mean.N


def xi0(C: float, sigma: float, Gamma: float) -> float:
    return 16 * (C**2 + sigma**2) + 16 * C * max(Gamma, 2 * C)


def default_lambda(n: int, C: float, sigma: float, Gamma: float) -> float:
    """Inverse temperature n / Xi_0 with Xi_0 = 16(C^2 + sigma^2) + 16 C max(Gamma, 2C)."""
    if n < 1:
        raise ValueError("n must be positive")
    if not (sigma > 0 and Gamma > 0):
        raise ValueError("sigma and Gamma must be positive")
    if C < 1:
        raise ValueError("C must be >= 1")
    return n / xi0(C, sigma, Gamma)
