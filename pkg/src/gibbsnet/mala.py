"""Metropolis-adjusted Langevin sampling of exp(-lam * R_n(theta)) on [-B, B]^P.

The sampler only needs an objective exposing ``dim`` and
``value_and_grad(theta) -> (risk, grad)``; network risks and the quadratic
surrogates used in tests share the same chain code.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)

LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class MalaConfig:
    """Chain settings.

    ``gamma=None`` triggers the pilot tuner.  ``s=None`` ties the proposal
    standard deviation to the Langevin scale ``sqrt(2 gamma / lam)``.
    """

    lam: float
    gamma: float | None = None
    s: float | None = None
    burn_in: int = 1000
    gap: int = 10
    n_keep: int = 100
    seed: int = 0
    bound: float = 1.0
    pilot_rounds: int = 20
    pilot_steps: int = 200
    target_accept: tuple[float, float] = (0.4, 0.7)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.s is not None and not self.s > 0:
            raise ValueError(f"s must be positive, got {self.s}")
        if self.burn_in < 0 or self.gap < 1 or self.n_keep < 1:
            raise ValueError("need burn_in >= 0, gap >= 1 and n_keep >= 1")
        if not self.bound > 0:
            raise ValueError("bound must be positive")

    @property
    def proposal_std(self) -> float:
        if self.s is not None:
            return self.s
        if self.gamma is None:
            raise ValueError("gamma is unset; tune it first")
        return math.sqrt(2 * self.gamma / self.lam)

    @property
    def n_steps(self) -> int:
        return self.burn_in + self.gap * self.n_keep


@dataclass(frozen=True)
class ChainState:
    theta: np.ndarray
    risk: float
    grad: np.ndarray
    step: int = 0


@dataclass
class ChainResult:
    draw: np.ndarray                 # theta^(b)
    kept: list[np.ndarray]           # theta^(b + c k), k = 1..N
    acceptance_rate: float
    risk_trace: np.ndarray
    accepted: np.ndarray
    theta_inf: np.ndarray
    config: MalaConfig
    extra: dict = field(default_factory=dict)


def initial_state(objective, theta0, bound: float) -> ChainState:
    theta0 = np.array(theta0, dtype=float)
    if theta0.shape != (objective.dim,):
        raise ValueError(f"init has shape {theta0.shape}, expected ({objective.dim},)")
    if np.any(np.abs(theta0) > bound):
        raise ValueError("initial state lies outside [-B, B]^P")
    risk, grad = objective.value_and_grad(theta0)
    return ChainState(theta0, risk, grad, 0)


def default_init(dim: int, bound: float, rng) -> np.ndarray:
    """Uniform draw on [-B/10, B/10]^P."""
    return rng.uniform(-bound / 10, bound / 10, size=dim)


def log_proposal_density(cfg: MalaConfig, theta, tau, grad_at_theta) -> float:
    """log q(tau | theta) for the Gaussian centred at theta - gamma * grad."""
    s = cfg.proposal_std
    d = np.asarray(tau, float) - np.asarray(theta, float) + cfg.gamma * np.asarray(grad_at_theta, float)
    P = d.size
    return -0.5 * P * (LOG_2PI + 2 * math.log(s)) - float(d @ d) / (2 * s * s)


def _log_ratio(cfg, theta, risk_theta, grad_theta, tau, risk_tau, grad_tau) -> float:
    return (-cfg.lam * risk_tau + cfg.lam * risk_theta
            + log_proposal_density(cfg, tau, theta, grad_tau)
            - log_proposal_density(cfg, theta, tau, grad_theta))


def _evaluate(cfg, objective, current: ChainState, tau):
    if np.any(np.abs(tau) > cfg.bound):
        return -math.inf, None, None
    risk_tau, grad_tau = objective.value_and_grad(tau)
    r = _log_ratio(cfg, current.theta, current.risk, current.grad, tau, risk_tau, grad_tau)
    return min(0.0, r), risk_tau, grad_tau


def acceptance_log_prob(cfg: MalaConfig, current: ChainState, tau, objective) -> float:
    """log alpha(tau | theta); -inf outside the box."""
    return _evaluate(cfg, objective, current, np.asarray(tau, dtype=float))[0]


def step(cfg: MalaConfig, state: ChainState, objective, rng) -> tuple[ChainState, bool]:
    """One Metropolis-Hastings transition; returns the new state and whether it moved."""
    s = cfg.proposal_std
    tau = state.theta - cfg.gamma * state.grad + s * rng.standard_normal(state.theta.size)
    log_alpha, risk_tau, grad_tau = _evaluate(cfg, objective, state, tau)
    u = rng.random()
    if log_alpha > -math.inf and math.log(u) < log_alpha:
        return ChainState(tau, risk_tau, grad_tau, state.step + 1), True
    return replace(state, step=state.step + 1), False


def log_target(cfg: MalaConfig, objective, theta) -> float:
    """Unnormalized log posterior under the dense uniform prior."""
    theta = np.asarray(theta, dtype=float)
    if np.any(np.abs(theta) > cfg.bound):
        return -math.inf
    return -cfg.lam * objective.value_and_grad(theta)[0]


def detailed_balance_gap(cfg: MalaConfig, objective, theta, tau) -> float:
    """pi(theta) q(tau|theta) alpha(tau|theta) - pi(tau) q(theta|tau) alpha(theta|tau), in logs."""
    theta = np.asarray(theta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    a = initial_state(objective, theta, cfg.bound)
    b = initial_state(objective, tau, cfg.bound)
    fwd = (-cfg.lam * a.risk + log_proposal_density(cfg, theta, tau, a.grad)
           + acceptance_log_prob(cfg, a, tau, objective))
    bwd = (-cfg.lam * b.risk + log_proposal_density(cfg, tau, theta, b.grad)
           + acceptance_log_prob(cfg, b, theta, objective))
    return fwd - bwd


def initial_gamma(cfg: MalaConfig) -> float:
    # Langevin step with noise scale bound/10
    return cfg.lam * (cfg.bound / 10) ** 2 / 2


def tune_gamma(cfg: MalaConfig, objective, state: ChainState, rng, step_fn=step,
               accept_key=None) -> tuple[MalaConfig, ChainState]:
    """Pilot phase: halve gamma below the target acceptance band, grow by 1.25 above it.

    The chain keeps running through the pilot rounds; the returned state is
    the end of the pilot.  ``accept_key`` lets callers restrict the rate to a
    subset of moves (``step_fn`` then returns ``(state, accepted, kind)``).
    """
    lo, hi = cfg.target_accept
    gamma = cfg.gamma if cfg.gamma is not None else initial_gamma(cfg)
    for rnd in range(cfg.pilot_rounds):
        trial = replace(cfg, gamma=gamma)
        hits = tries = 0
        for _ in range(cfg.pilot_steps):
            out = step_fn(trial, state, objective, rng)
            state, ok = out[0], out[1]
            if accept_key is None or out[2] == accept_key:
                tries += 1
                hits += ok
        rate = hits / tries if tries else 0.0
        if rate < lo:
            gamma *= 0.5
        elif rate > hi:
            gamma *= 1.25
        log.debug("pilot round %d: acceptance %.3f -> gamma %.3g", rnd, rate, gamma)
    return replace(cfg, gamma=gamma), replace(state, step=0)


def write_trace(path, rows, header) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def run(cfg: MalaConfig, objective, init=None, trace_path=None) -> ChainResult:
    """Run b + c N steps; keep theta^(b) and theta^(b + c k) for k = 1..N."""
    rng = np.random.default_rng(cfg.seed)
    if init is None:
        init = default_init(objective.dim, cfg.bound, rng)
    state = initial_state(objective, init, cfg.bound)
    if cfg.gamma is None:
        cfg, state = tune_gamma(cfg, objective, state, rng)

    n = cfg.n_steps
    risks = np.empty(n + 1)
    acc = np.zeros(n + 1, dtype=np.int8)
    tinf = np.empty(n + 1)
    risks[0], tinf[0] = state.risk, np.max(np.abs(state.theta))
    draw = state.theta if cfg.burn_in == 0 else None
    kept = []
    for k in range(1, n + 1):
        state, ok = step(cfg, state, objective, rng)
        risks[k], acc[k], tinf[k] = state.risk, ok, np.max(np.abs(state.theta))
        if k == cfg.burn_in:
            draw = state.theta
        elif k > cfg.burn_in and (k - cfg.burn_in) % cfg.gap == 0:
            kept.append(state.theta)

    rate = float(acc[1:].mean()) if n else 0.0
    if trace_path is not None:
        write_trace(trace_path,
                    ((k, repr(float(risks[k])), int(acc[k]), repr(float(tinf[k]))) for k in range(n + 1)),
                    ["step", "risk", "accepted", "theta_inf"])
    return ChainResult(draw, kept, rate, risks, acc, tinf, cfg)
