"""Sparse clipped ReLU networks: layout, evaluation and exact risk gradients.

A network with ``L`` hidden layers of constant width ``r`` is stored as one
flat parameter vector.  The layout is fixed::

    W1 (r x p, row-major), v1 (r), W2 (r x r), v2 (r), ..., W_{L+1} (1 x r), v_{L+1} (1)

Indices are 0-based throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class NetworkArch:
    """Shape descriptor of a fully connected ReLU network.

    ``B`` is the half-width of the parameter box and ``C`` the clip level of
    the network output.
    """

    p: int
    L: int
    r: int
    B: float = 1.0
    C: float = 1.0

    def __post_init__(self):
        for name in ("p", "L", "r"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if self.C < 1:
            raise ValueError(f"C must be >= 1, got {self.C}")

    @property
    def P(self) -> int:
        return param_count(self)

    @cached_property
    def layers(self) -> tuple[tuple[slice, tuple[int, int], slice], ...]:
        """Per layer: (weight slice, weight shape, shift slice) into theta."""
        dims = [self.p] + [self.r] * self.L + [1]
        out = []
        pos = 0
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = slice(pos, pos + fan_out * fan_in)
            pos = w.stop
            v = slice(pos, pos + fan_out)
            pos = v.stop
            out.append((w, (fan_out, fan_in), v))
        return tuple(out)


def param_count(arch: NetworkArch) -> int:
    p, L, r = arch.p, arch.L, arch.r
    return (p + 1) * r + (L - 1) * (r + 1) * r + r + 1


def unflatten(arch: NetworkArch, theta) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split theta into ``[(W1, v1), ..., (W_{L+1}, v_{L+1})]`` views."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (arch.P,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({arch.P},)")
    return [(theta[w].reshape(shape), theta[v]) for w, shape, v in arch.layers]


def flatten(arch: NetworkArch, layers) -> np.ndarray:
    theta = np.concatenate([np.concatenate([np.ravel(W), np.ravel(v)]) for W, v in layers])
    if theta.shape != (arch.P,):
        raise ValueError(f"layers give {theta.size} parameters, expected {arch.P}")
    return theta


class ActiveSet:
    """Sorted, duplicate-free set of active parameter indices."""

    __slots__ = ("indices", "P", "_mask")

    def __init__(self, indices, P: int):
        idx = np.unique(np.asarray(indices, dtype=np.intp).reshape(-1))
        if idx.size and (idx[0] < 0 or idx[-1] >= P):
            raise ValueError(f"active indices must lie in [0, {P})")
        self._set(idx, int(P))

    def _set(self, idx, P, mask=None):
        idx.setflags(write=False)
        if mask is None:
            mask = np.zeros(P, dtype=bool)
            mask[idx] = True
        mask.setflags(write=False)
        self.indices = idx
        self.P = P
        self._mask = mask

    @classmethod
    def full(cls, P: int) -> "ActiveSet":
        return cls(np.arange(P), P)

    @classmethod
    def from_mask(cls, mask) -> "ActiveSet":
        mask = np.array(mask, dtype=bool).reshape(-1)
        out = cls.__new__(cls)
        out._set(np.flatnonzero(mask), mask.size, mask)
        return out

    @property
    def mask(self) -> np.ndarray:
        return self._mask

    @property
    def complement(self) -> np.ndarray:
        return np.flatnonzero(~self._mask)

    def add(self, i: int) -> "ActiveSet":
        if self._mask[i]:
            return self
        mask = self._mask.copy()
        mask[i] = True
        return ActiveSet.from_mask(mask)

    def remove(self, i: int) -> "ActiveSet":
        if not self._mask[i]:
            return self
        mask = self._mask.copy()
        mask[i] = False
        return ActiveSet.from_mask(mask)

    def consistent(self, theta) -> bool:
        """True iff theta vanishes outside the set."""
        theta = np.asarray(theta)
        return theta.shape == (self.P,) and not theta[~self._mask].any()

    def __len__(self):
        return int(self.indices.size)

    def __contains__(self, i):
        return 0 <= i < self.P and bool(self._mask[i])

    def __iter__(self):
        return iter(self.indices.tolist())

    def __eq__(self, other):
        return isinstance(other, ActiveSet) and self.P == other.P and np.array_equal(self._mask, other._mask)

    def __hash__(self):
        return hash((self.P, self.indices.tobytes()))

    def __repr__(self):
        return f"ActiveSet({self.indices.tolist()}, P={self.P})"


def _inputs(arch: NetworkArch, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != arch.p:
        raise ValueError(f"input has shape {x.shape}, expected (..., {arch.p})")
    return X, single


def _forward_t(layers, XT):
    """Forward pass on transposed inputs (p, n); activations are (units, n).

    Keeping the sample axis contiguous makes every reduction over samples a
    contiguous (pairwise) sum.
    """
    acts = [XT]
    h = XT
    for W, v in layers[:-1]:
        h = W @ h
        h += v[:, None]
        np.maximum(h, 0.0, out=h)
        acts.append(h)
    W, v = layers[-1]
    g = W[0] @ h
    g += v[0]
    return g, acts


def _evaluate(arch: NetworkArch, theta, x):
    X, single = _inputs(arch, x)
    g, _ = _forward_t(unflatten(arch, theta), np.ascontiguousarray(X.T))
    return g, single


def forward_raw(arch: NetworkArch, theta, x):
    """Unclipped network output g_theta(x); ``x`` may be one point or an (n, p) batch."""
    g, single = _evaluate(arch, theta, x)
    return float(g[0]) if single else g


def forward_clipped(arch: NetworkArch, theta, x):
    g, single = _evaluate(arch, theta, x)
    f = np.clip(g, -arch.C, arch.C)
    return float(f[0]) if single else f


def risk_and_grad_t(arch: NetworkArch, theta, XT, Y) -> tuple[float, np.ndarray]:
    """As :func:`risk_and_grad` with inputs already transposed to shape (p, n)."""
    n = Y.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    layers = unflatten(arch, theta)
    g, acts = _forward_t(layers, XT)
    f = np.clip(g, -arch.C, arch.C)
    resid = Y - f
    risk = float(np.mean(resid * resid))

    delta = resid
    delta *= -2.0 / n
    delta[np.abs(g) >= arch.C] = 0.0
    grads = [None] * len(layers)
    grads[-1] = (acts[-1] @ delta, np.array([delta.sum()]))
    d = layers[-1][0].T * delta
    for k in range(len(layers) - 2, -1, -1):
        d *= acts[k + 1] > 0.0
        grads[k] = (d @ acts[k].T, d.sum(axis=1))
        if k:
            d = layers[k][0].T @ d
    return risk, flatten(arch, grads)


def risk_and_grad(arch: NetworkArch, theta, X, Y) -> tuple[float, np.ndarray]:
    """Empirical squared risk of the clipped network and its exact gradient.

    Subgradient conventions: ReLU'(0) = 0 and the clip derivative is 0 at
    |g| = C.  The gradient is dense; entries of inactive coordinates are
    computed as well.
    """
    X, _ = _inputs(arch, X)
    Y = np.asarray(Y, dtype=float)
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y disagree in the number of samples")
    return risk_and_grad_t(arch, theta, np.ascontiguousarray(X.T), Y)


def grad_empirical_risk(arch: NetworkArch, theta, data) -> np.ndarray:
    return risk_and_grad(arch, theta, data.X, data.Y)[1]


def lipschitz_bound(arch: NetworkArch, x) -> float:
    """Factor ``4 (2 r B)^L max(|x|_1, 1)`` bounding |f_theta(x) - f_theta'(x)| / |theta - theta'|_inf."""
    x = np.asarray(x, dtype=float)
    return 4.0 * (2.0 * arch.r * arch.B) ** arch.L * max(float(np.abs(x).sum()), 1.0)


class NetworkRisk:
    """Empirical risk objective ``theta -> R_n(f_theta)`` for the samplers.

    ``n_grad_evals`` counts gradient evaluations.
    """

    def __init__(self, arch: NetworkArch, data):
        if len(data.Y) == 0:
            raise ValueError("empty dataset")
        self.arch = arch
        self.data = data
        self.dim = arch.P
        self.n_grad_evals = 0
        X, _ = _inputs(arch, data.X)
        self._XT = np.ascontiguousarray(X.T, dtype=float)
        self._Y = np.ascontiguousarray(data.Y, dtype=float)

    def value(self, theta) -> float:
        g, _ = _forward_t(unflatten(self.arch, theta), self._XT)
        f = np.clip(g, -self.arch.C, self.arch.C)
        return float(np.mean((self._Y - f) ** 2))

    def value_and_grad(self, theta) -> tuple[float, np.ndarray]:
        self.n_grad_evals += 1
        return risk_and_grad_t(self.arch, theta, self._XT, self._Y)
