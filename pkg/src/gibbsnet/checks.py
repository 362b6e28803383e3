"""Numerical oracles behind ``gibbsnet check``.

Each suite draws random instances, compares a package quantity against an
independent computation and returns the largest deviation found.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy import integrate

from . import mala, rjmcmc
from .net_core import ActiveSet, NetworkArch, NetworkRisk, forward_clipped, lipschitz_bound
from .prior import dv_objective, donsker_varadhan_check, kl_rho_pi_I, log_mixture_correction
from .risk import Dataset, LinearRisk

LIPSCHITZ_ARCHS = ((3, 1, 4), (3, 2, 4), (5, 3, 8))


def _kl_quadrature_1d(c: float, eta: float, B: float) -> float:
    """KL(U(interval) | U[-B, B]) by integrating rho log(rho / pi) numerically."""
    lo, hi = max(c - eta, -B), min(c + eta, B)
    length = integrate.quad(lambda x: 1.0, lo, hi, epsabs=1e-13, epsrel=1e-13)[0]
    rho = 1.0 / length
    val, _ = integrate.quad(lambda x: rho * math.log(rho * 2 * B), lo, hi, epsabs=1e-13, epsrel=1e-13)
    return val


def kl_deviation(n: int = 200, seed=0) -> float:
    """Closed-form KL versus per-coordinate quadrature, and the mixture term versus exact rationals."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        P = int(rng.integers(1, 30))
        B = float(rng.uniform(1.0, 3.0))
        eta = float(rng.uniform(1e-3, 2 * B))
        active = ActiveSet(rng.choice(P, size=int(rng.integers(1, P + 1)), replace=False), P)
        theta = np.zeros(P)
        theta[active.indices] = rng.uniform(-B, B, size=len(active))
        quad = sum(_kl_quadrature_1d(theta[i], eta, B) for i in active)
        worst = max(worst, abs(kl_rho_pi_I(active, eta, B, theta) - quad))

        k = len(active)
        exact = Fraction(2 ** P - 1, 2 ** P) * 2 ** k * math.comb(P, k)
        worst = max(worst, abs(log_mixture_correction(P, k) - math.log(exact)))
    return worst


def dv_deviation(n: int = 50, n_nu: int = 100, seed=0) -> tuple[float, float]:
    """(max |lhs - rhs| at the Gibbs measure, max excess of suboptimal nu over lhs)."""
    rng = np.random.default_rng(seed)
    eq = 0.0
    viol = 0.0
    for _ in range(n):
        m = int(rng.integers(1, 11))
        h = rng.normal(0, 3, size=m)
        mu = rng.dirichlet(np.ones(m))
        lhs, rhs = donsker_varadhan_check(h, mu)
        eq = max(eq, abs(lhs - rhs))
        for _ in range(n_nu):
            nu = rng.dirichlet(np.ones(m))
            viol = max(viol, dv_objective(h, mu, nu) - lhs)
    return eq, max(viol, 0.0)


def lipschitz_deviation(n: int = 1000, archs=LIPSCHITZ_ARCHS, seed=0) -> float:
    """Largest ``|f_theta(x) - f_theta'(x)| - bound`` over random triples (<= 0 means no violation)."""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for p, L, r in archs:
        arch = NetworkArch(p, L, r)
        thetas = rng.uniform(-arch.B, arch.B, size=(n, arch.P))
        others = thetas + rng.uniform(-1, 1, size=(n, arch.P)) * rng.uniform(0, 1, size=(n, 1)) ** 3
        others = np.clip(others, -arch.B, arch.B)
        X = rng.uniform(-2, 2, size=(n, p))
        for t, u, x in zip(thetas, others, X):
            lhs = abs(forward_clipped(arch, t, x) - forward_clipped(arch, u, x))
            rhs = lipschitz_bound(arch, x) * float(np.max(np.abs(t - u)))
            worst = max(worst, lhs - rhs)
    return worst


def mala_balance_deviation(n: int = 1000, seed=0, lam: float = 10.0, bound: float = 2.0) -> float:
    """Detailed-balance log gap of MALA on the 1-d surrogate exp(-lam theta^2)."""
    rng = np.random.default_rng(seed)
    obj = LinearRisk([[1.0]], [0.0])
    worst = 0.0
    for _ in range(n):
        cfg = mala.MalaConfig(lam=lam, gamma=float(rng.uniform(1e-3, 0.1)), bound=bound)
        theta, tau = rng.uniform(-bound, bound, size=(2, 1))
        worst = max(worst, abs(mala.detailed_balance_gap(cfg, obj, theta, tau)))
    return worst


def _cross_pair(rng, P: int, bound: float):
    """Random (theta, I) and a neighbouring (tau, I') differing in one index."""
    size = int(rng.integers(1, P + 1))
    active = ActiveSet(rng.choice(P, size=size, replace=False), P)
    theta = np.zeros(P)
    theta[active.indices] = rng.uniform(-bound, bound, size=size)
    grow = size == 1 or (size < P and rng.random() < 0.5)
    if grow:
        i = int(rng.choice(active.complement))
        new = active.add(i)
    else:
        i = int(rng.choice(active.indices))
        new = active.remove(i)
    tau = np.zeros(P)
    tau[new.indices] = np.clip(theta[new.indices] + 0.1 * rng.standard_normal(len(new)), -bound, bound)
    return theta, active, tau, new


def rj_balance_deviation(n: int = 1000, seed=0) -> float:
    """Generalized detailed-balance log gap of RJMCMC at random cross-dimension pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    X = rng.standard_normal((20, 3))
    obj3 = LinearRisk(X, X @ np.array([0.5, 0.0, -0.3]) + 0.3 * rng.standard_normal(20))
    arch = NetworkArch(2, 1, 3)
    Xn = rng.random((50, 2))
    objn = NetworkRisk(arch, Dataset(Xn, np.sin(3 * Xn[:, 0])))
    for k in range(n):
        obj = obj3 if k % 2 == 0 else objn
        cfg = rjmcmc.RjmcmcConfig(lam=float(rng.uniform(1, 50)), gamma=float(rng.uniform(1e-3, 0.05)))
        theta, active, tau, new = _cross_pair(rng, obj.dim, cfg.bound)
        worst = max(worst, abs(rjmcmc.detailed_balance_gap(cfg, obj, theta, active, tau, new)))
    return worst


def balance_deviation(n: int = 1000, seed=0) -> float:
    return max(mala_balance_deviation(n, seed), rj_balance_deviation(n, seed))


def _dv_suite(seed=0) -> float:
    return max(dv_deviation(seed=seed))


def _lipschitz_suite(seed=0) -> float:
    # violations only; a negative margin counts as zero deviation
    return max(lipschitz_deviation(seed=seed), 0.0)


SUITES: dict[str, Callable[..., float]] = {
    "kl": kl_deviation,
    "dv": _dv_suite,
    "lipschitz": _lipschitz_suite,
    "balance": balance_deviation,
}
