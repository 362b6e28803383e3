"""Uniform sparse box priors, the geometric sparsity mixture, and KL utilities.

All densities are handled in the log domain.  The density of the mixture on a
support set S_I is taken with respect to Lebesgue measure on the coordinates
in I, which is the convention used by the reversible-jump acceptance ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .net_core import ActiveSet


def log_binom(P: int, i) -> np.ndarray | float:
    return gammaln(P + 1) - gammaln(np.asarray(i) + 1) - gammaln(P - np.asarray(i) + 1)


@dataclass(frozen=True)
class SparseBoxPrior:
    """Uniform distribution on S_I = {theta in [-B, B]^P : theta_i = 0 for i not in I}."""

    active: ActiveSet
    B: float = 1.0

    @property
    def P(self) -> int:
        return self.active.P

    def log_density(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        if not self.active.consistent(theta) or np.any(np.abs(theta) > self.B):
            return -math.inf
        return -len(self.active) * math.log(2 * self.B)

    def sample(self, rng) -> np.ndarray:
        theta = np.zeros(self.P)
        theta[self.active.indices] = rng.uniform(-self.B, self.B, size=len(self.active))
        return theta


@dataclass(frozen=True)
class MixturePrior:
    """Geometric mixture over active sets of the uniform sparse box priors.

    Sparsity ``i`` has weight ``base**-i / C_P`` on {1, ..., P}; given ``i`` the
    active set is uniform among the subsets of size ``i``.  With the default
    base 2, ``C_P = 1 - 2**-P``.  B = 1 is a convenience default; the theory
    only asks for B >= 1.
    """

    P: int
    B: float = 1.0
    sparsity_base: float = 2.0

    def __post_init__(self):
        if self.P < 1:
            raise ValueError("P must be >= 1")
        if self.sparsity_base <= 1:
            raise ValueError("sparsity_base must exceed 1")
        if self.B <= 0:
            raise ValueError("B must be positive")

    @property
    def log_normalizer(self) -> float:
        """log C_P with C_P = sum_{i=1}^P base**-i."""
        b = self.sparsity_base
        return math.log1p(-(b ** -self.P)) - math.log(b - 1)

    def log_sparsity_probs(self) -> np.ndarray:
        i = np.arange(1, self.P + 1)
        return -i * math.log(self.sparsity_base) - self.log_normalizer

    def log_weight_of_size(self, i: int) -> float:
        if not 1 <= i <= self.P:
            raise ValueError(f"mixture has no component with |I| = {i}")
        P = self.P
        lbinom = math.lgamma(P + 1) - math.lgamma(i + 1) - math.lgamma(P - i + 1)
        return -i * math.log(self.sparsity_base) - lbinom - self.log_normalizer


def sample_mixture(prior: MixturePrior, rng) -> tuple[ActiveSet, np.ndarray]:
    logp = prior.log_sparsity_probs()
    probs = np.exp(logp - logsumexp(logp))
    size = int(rng.choice(np.arange(1, prior.P + 1), p=probs))
    active = ActiveSet(rng.choice(prior.P, size=size, replace=False), prior.P)
    return active, SparseBoxPrior(active, prior.B).sample(rng)


def log_component_weight(prior: MixturePrior, active: ActiveSet) -> float:
    """log of the mixture weight ``base**-|I| binom(P, |I|)**-1 / C_P`` of Pi_I."""
    return prior.log_weight_of_size(len(active))


def log_prior_density_on_active(prior: MixturePrior, active: ActiveSet, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    if not active.consistent(theta) or np.abs(theta).max() > prior.B:
        return -math.inf
    return log_component_weight(prior, active) - len(active) * math.log(2 * prior.B)


def _check_eta(eta):
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")


def clipped_interval_lengths(center, eta, B) -> np.ndarray:
    """Lebesgue measure of [c - eta, c + eta] intersected with [-B, B], per coordinate."""
    c = np.asarray(center, dtype=float)
    return np.minimum(c + eta, B) - np.maximum(c - eta, -B)


def kl_rho_pi_I(active: ActiveSet, eta: float, B: float, theta_star) -> float:
    """KL between the uniform eta-box around theta_star (clipped to the box) and Pi_I.

    Always at most ``|I| log(2B / eta)``.
    """
    _check_eta(eta)
    theta_star = np.asarray(theta_star, dtype=float)
    if not active.consistent(theta_star):
        raise ValueError("theta_star has nonzero entries outside the active set")
    if np.any(np.abs(theta_star) > B):
        raise ValueError("theta_star lies outside [-B, B]^P")
    lengths = clipped_interval_lengths(theta_star[active.indices], eta, B)
    return float(np.sum(np.log(2 * B / lengths)))


def log_mixture_correction(P: int, size: int, sparsity_base: float = 2.0) -> float:
    """log C_I = log(C_P base^|I| binom(P, |I|))."""
    return -MixturePrior(P, 1.0, sparsity_base).log_weight_of_size(size)


def kl_rho_pi_mixture(active: ActiveSet, eta: float, B: float, theta_star, P: int,
                      sparsity_base: float = 2.0) -> float:
    return kl_rho_pi_I(active, eta, B, theta_star) + log_mixture_correction(P, len(active), sparsity_base)


def _check_prob(mu):
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or mu.size == 0 or np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise ValueError("mu must be a nonempty nonnegative vector")
    if abs(mu.sum() - 1.0) > 1e-9:
        raise ValueError(f"mu sums to {mu.sum()}, not 1")
    return mu


def dv_objective(h, mu, nu) -> float:
    """int h dnu - KL(nu | mu) for finite measures; -inf unless nu << mu."""
    h = np.asarray(h, dtype=float)
    mu = _check_prob(mu)
    nu = _check_prob(nu)
    pos = nu > 0
    if np.any(mu[pos] == 0):
        return -math.inf
    kl = float(np.sum(nu[pos] * (np.log(nu[pos]) - np.log(mu[pos]))))
    return float(np.sum(nu[pos] * h[pos])) - kl


def gibbs_measure(h, mu) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    mu = _check_prob(mu)
    with np.errstate(divide="ignore"):
        logw = h + np.log(mu)
    return np.exp(logw - logsumexp(logw))


def donsker_varadhan_check(h, mu) -> tuple[float, float]:
    """Both sides of log int e^h dmu = sup_nu (int h dnu - KL(nu|mu)).

    The right side is evaluated at the Gibbs measure nu ~ mu e^h, where the
    supremum is attained.
    """
    h = np.asarray(h, dtype=float)
    mu = _check_prob(mu)
    if h.shape != mu.shape:
        raise ValueError("h and mu must have the same length")
    lhs = float(logsumexp(h, b=mu))
    rhs = dv_objective(h, mu, gibbs_measure(h, mu))
    return lhs, rhs
