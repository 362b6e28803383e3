"""Reversible-jump Metropolis-Hastings over (active set, theta) under the mixture prior.

Each step picks one of three moves:

* keep   - Langevin proposal on the current active set,
* remove - drop index i (chosen with weight ~ exp(-|theta_i|)), Langevin
           proposal on the remaining coordinates,
* add    - activate index i (chosen with squared-rank weights of |grad_i|
           over the inactive coordinates), Langevin proposal on the enlarged set.

Move probabilities are (1/4, 1/2, 1/4), or (0, 2/3, 1/3) with one active
coordinate and (1/3, 2/3, 0) with all coordinates active.  The gradient
computed at a proposal is reused for the reverse density and, on
acceptance, for the next step, so each step costs one gradient.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .mala import LOG_2PI, MalaConfig, default_init, tune_gamma
from .net_core import ActiveSet
from .prior import MixturePrior, log_prior_density_on_active

REMOVE, KEEP, ADD = "remove", "keep", "add"
KINDS = (REMOVE, KEEP, ADD)


@dataclass(frozen=True)
class RjmcmcConfig(MalaConfig):
    sparsity_base: float = 2.0

    def prior(self, P: int) -> MixturePrior:
        return MixturePrior(P, self.bound, self.sparsity_base)


@dataclass(frozen=True)
class Move:
    kind: str
    index: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown move kind {self.kind!r}")
        if (self.kind == KEEP) != (self.index is None):
            raise ValueError("remove/add moves need an index, keep moves none")


@dataclass(frozen=True)
class RjState:
    theta: np.ndarray
    active: ActiveSet
    risk: float
    grad: np.ndarray
    step: int = 0


@dataclass
class RjResult:
    draw: np.ndarray
    draw_active: ActiveSet
    kept: list[np.ndarray]
    kept_active: list[ActiveSet]
    acceptance_rate: float
    keep_acceptance_rate: float
    sparsity_trace: np.ndarray
    risk_trace: np.ndarray
    accepted: np.ndarray
    move_kinds: list[str]
    config: RjmcmcConfig
    extra: dict = field(default_factory=dict)


def move_probabilities(size: int, P: int) -> dict[str, float]:
    if P == 1:
        return {REMOVE: 0.0, KEEP: 1.0, ADD: 0.0}
    if size == 1:
        return {REMOVE: 0.0, KEEP: 2 / 3, ADD: 1 / 3}
    if size == P:
        return {REMOVE: 1 / 3, KEEP: 2 / 3, ADD: 0.0}
    return {REMOVE: 0.25, KEEP: 0.5, ADD: 0.25}


def psi_log_density(active: ActiveSet, theta, tau, grad, cfg: MalaConfig) -> float:
    """Langevin proposal density over the active coordinates of tau; -inf if tau leaves S_I."""
    tau = np.asarray(tau, dtype=float)
    if not active.consistent(tau):
        return -math.inf
    k = len(active)
    if k == 0:
        return 0.0
    idx = active.indices
    s = cfg.proposal_std
    d = tau[idx] - np.asarray(theta, float)[idx] + cfg.gamma * np.asarray(grad, float)[idx]
    return -0.5 * k * (LOG_2PI + 2 * math.log(s)) - float(d @ d) / (2 * s * s)


def removal_weights(theta, active: ActiveSet) -> np.ndarray:
    """Probabilities ~ exp(-|theta_i|) over ``active.indices``."""
    if len(active) == 0:
        raise ValueError("cannot remove from an empty active set")
    z = -np.abs(np.asarray(theta, float)[active.indices])
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


def addition_weights(grad, active: ActiveSet) -> np.ndarray:
    """Squared-rank probabilities over ``active.complement``.

    The unnormalized weight of i counts the inactive j with |g_j| <= |g_i|,
    including i itself, so tied gradients share the larger count.
    """
    comp = active.complement
    if comp.size == 0:
        raise ValueError("no inactive coordinate to add")
    a = np.abs(np.asarray(grad, float)[comp])
    counts = np.searchsorted(np.sort(a), a, side="right").astype(float)
    w = counts * counts
    return w / w.sum()


def _logsumexp(terms) -> float:
    m = max(terms)
    if m == -math.inf:
        return m
    return m + math.log(sum(math.exp(t - m) for t in terms))


def log_proposal(cfg: MalaConfig, theta, active: ActiveSet, grad, tau, new_active: ActiveSet) -> float:
    """log q((new_active, tau) | (active, theta)) summed over every branch that yields new_active."""
    probs = move_probabilities(len(active), active.P)
    removed = np.flatnonzero(active.mask & ~new_active.mask)
    added = np.flatnonzero(new_active.mask & ~active.mask)
    terms = []
    if removed.size == 0 and added.size == 0 and probs[KEEP] > 0:
        terms.append(math.log(probs[KEEP]))
    if probs[REMOVE] > 0 and removed.size == 1 and added.size == 0:
        w = removal_weights(theta, active)[np.searchsorted(active.indices, removed[0])]
        terms.append(math.log(probs[REMOVE]) + math.log(w))
    if probs[ADD] > 0 and added.size == 1 and removed.size == 0:
        comp = active.complement
        w = addition_weights(grad, active)[np.searchsorted(comp, added[0])]
        terms.append(math.log(probs[ADD]) + math.log(w))
    if not terms:
        return -math.inf
    return _logsumexp(terms) + psi_log_density(new_active, theta, tau, grad, cfg)


def propose(state: RjState, cfg: MalaConfig, rng):
    """Draw (tau, new_active) and return it with the forward log density and the move."""
    active = state.active
    probs = move_probabilities(len(active), active.P)
    u = rng.random()
    if u < probs[REMOVE]:
        kind = REMOVE
    elif u < probs[REMOVE] + probs[KEEP]:
        kind = KEEP
    else:
        kind = ADD
    if kind == REMOVE:
        i = int(rng.choice(active.indices, p=removal_weights(state.theta, active)))
        new_active, move = active.remove(i), Move(REMOVE, i)
    elif kind == ADD:
        i = int(rng.choice(active.complement, p=addition_weights(state.grad, active)))
        new_active, move = active.add(i), Move(ADD, i)
    else:
        new_active, move = active, Move(KEEP)
    idx = new_active.indices
    tau = np.zeros_like(state.theta)
    tau[idx] = (state.theta[idx] - cfg.gamma * state.grad[idx]
                + cfg.proposal_std * rng.standard_normal(idx.size))
    log_q = log_proposal(cfg, state.theta, active, state.grad, tau, new_active)
    return tau, new_active, log_q, move


def _log_ratio(cfg, prior, state: RjState, tau, new_active, risk_tau, grad_tau, log_q_fwd=None) -> float:
    if log_q_fwd is None:
        log_q_fwd = log_proposal(cfg, state.theta, state.active, state.grad, tau, new_active)
    log_q_rev = log_proposal(cfg, tau, new_active, grad_tau, state.theta, state.active)
    return (-cfg.lam * risk_tau + cfg.lam * state.risk
            + log_prior_density_on_active(prior, new_active, tau)
            - log_prior_density_on_active(prior, state.active, state.theta)
            + log_q_rev - log_q_fwd)


def _evaluate(cfg, prior, objective, state, tau, new_active, log_q_fwd=None):
    if np.any(np.abs(tau) > cfg.bound) or not new_active.consistent(tau) or len(new_active) == 0:
        return -math.inf, None, None
    risk_tau, grad_tau = objective.value_and_grad(tau)
    r = _log_ratio(cfg, prior, state, tau, new_active, risk_tau, grad_tau, log_q_fwd)
    return min(0.0, r), risk_tau, grad_tau


def rj_acceptance_log_prob(state: RjState, tau, new_active: ActiveSet, objective, cfg: RjmcmcConfig) -> float:
    prior = cfg.prior(state.active.P)
    return _evaluate(cfg, prior, objective, state, np.asarray(tau, float), new_active)[0]


def make_state(objective, theta, active: ActiveSet, bound: float) -> RjState:
    theta = np.array(theta, dtype=float)
    if theta.shape != (objective.dim,) or active.P != objective.dim:
        raise ValueError("theta / active set do not match the objective dimension")
    if len(active) == 0:
        raise ValueError("reversible-jump chain needs at least one active coordinate")
    if not active.consistent(theta):
        raise ValueError("theta has nonzero entries outside the active set")
    if np.any(np.abs(theta) > bound):
        raise ValueError("initial state lies outside [-B, B]^P")
    risk, grad = objective.value_and_grad(theta)
    return RjState(theta, active, risk, grad, 0)


def step(cfg: RjmcmcConfig, state: RjState, objective, rng, prior=None):
    """One transition; returns (new_state, accepted, move_kind)."""
    if prior is None:
        prior = cfg.prior(state.active.P)
    tau, new_active, log_q, move = propose(state, cfg, rng)
    log_alpha, risk_tau, grad_tau = _evaluate(cfg, prior, objective, state, tau, new_active, log_q)
    u = rng.random()
    if log_alpha > -math.inf and math.log(u) < log_alpha:
        return RjState(tau, new_active, risk_tau, grad_tau, state.step + 1), True, move.kind
    return replace(state, step=state.step + 1), False, move.kind


def log_joint(cfg: RjmcmcConfig, objective, theta, active: ActiveSet) -> float:
    prior = cfg.prior(active.P)
    lp = log_prior_density_on_active(prior, active, theta)
    if lp == -math.inf:
        return lp
    return lp - cfg.lam * objective.value_and_grad(theta)[0]


def detailed_balance_gap(cfg: RjmcmcConfig, objective, theta, active, tau, new_active) -> float:
    """Log-domain difference of pi q alpha between the two directions (0 when balanced)."""
    a = make_state(objective, theta, active, cfg.bound)
    b = make_state(objective, tau, new_active, cfg.bound)
    prior = cfg.prior(active.P)
    fwd = (log_joint(cfg, objective, a.theta, active)
           + log_proposal(cfg, a.theta, active, a.grad, b.theta, new_active)
           + _evaluate(cfg, prior, objective, a, b.theta, new_active)[0])
    bwd = (log_joint(cfg, objective, b.theta, new_active)
           + log_proposal(cfg, b.theta, new_active, b.grad, a.theta, active)
           + _evaluate(cfg, prior, objective, b, a.theta, active)[0])
    return fwd - bwd


def run(cfg: RjmcmcConfig, objective, init=None, init_active: ActiveSet | None = None,
        trace_path=None) -> RjResult:
    """Run b + c N reversible-jump steps.

    By default the chain starts from all coordinates active with weights
    uniform on [-B/10, B/10].  The pilot tuner (when ``gamma`` is unset)
    targets the acceptance rate of keep moves.
    """
    rng = np.random.default_rng(cfg.seed)
    P = objective.dim
    if init is None:
        init = default_init(P, cfg.bound, rng)
        if init_active is not None:
            init[~init_active.mask] = 0.0
    if init_active is None:
        init_active = ActiveSet.from_mask(np.asarray(init) != 0)
    state = make_state(objective, init, init_active, cfg.bound)
    prior = cfg.prior(P)

    def _step(c, st, obj, r):
        return step(c, st, obj, r, prior)

    if cfg.gamma is None:
        cfg, state = tune_gamma(cfg, objective, state, rng, step_fn=_step, accept_key=KEEP)

    n = cfg.n_steps
    card = np.empty(n + 1, dtype=np.int64)
    risks = np.empty(n + 1)
    acc = np.zeros(n + 1, dtype=np.int8)
    kinds = [""]
    card[0], risks[0] = len(state.active), state.risk
    draw, draw_active = (state.theta, state.active) if cfg.burn_in == 0 else (None, None)
    kept, kept_active = [], []
    keep_tries = keep_hits = 0
    for k in range(1, n + 1):
        state, ok, kind = _step(cfg, state, objective, rng)
        card[k], risks[k], acc[k] = len(state.active), state.risk, ok
        kinds.append(kind)
        if kind == KEEP:
            keep_tries += 1
            keep_hits += ok
        if k == cfg.burn_in:
            draw, draw_active = state.theta, state.active
        elif k > cfg.burn_in and (k - cfg.burn_in) % cfg.gap == 0:
            kept.append(state.theta)
            kept_active.append(state.active)

    if trace_path is not None:
        with open(trace_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "cardinality", "risk", "accepted", "move_kind"])
            for k in range(n + 1):
                w.writerow([k, int(card[k]), repr(float(risks[k])), int(acc[k]), kinds[k]])
    return RjResult(
        draw=draw, draw_active=draw_active, kept=kept, kept_active=kept_active,
        acceptance_rate=float(acc[1:].mean()) if n else 0.0,
        keep_acceptance_rate=keep_hits / keep_tries if keep_tries else 0.0,
        sparsity_trace=card, risk_trace=risks, accepted=acc, move_kinds=kinds, config=cfg,
    )
