"""Synthetic regression data: sparse teacher networks and hierarchical compositions."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .net_core import ActiveSet, NetworkArch, forward_clipped
from .risk import Dataset

NOISE_LAWS = ("gaussian", "uniform")
INPUT_LAWS = ("uniform", "gaussian")


class ConfigError(ValueError):
    """Invalid user configuration (unknown ids, bad values)."""


def _hier_a(X):
    return ((X[:, 0] + X[:, 2]) / 2) ** 2


def _hier_b(X):
    return np.sin(np.pi * X[:, :3]).sum(axis=1) / 3


def _hier_c(X):
    return np.maximum(X[:, 0], X[:, 1]) * X[:, 4]


# id -> (function, minimal input dimension, description)
BUILTINS: dict[str, tuple[Callable, int, str]] = {
    "a": (_hier_a, 3, "g1(g0(x)), g0(x) = (x1 + x3)/2, g1(u) = u^2; q=1, d=(p,1), t=(2,1), beta=(inf, inf)"),
    "b": (_hier_b, 3, "sum_{j<=3} sin(pi x_j)/3; q=1, d=(p,3), t=(1,3), beta=(inf, inf)"),
    "c": (_hier_c, 5, "g1(g0(x)), g0(x) = (max(x1, x2), x5), g1(u, v) = u v; q=1, d=(p,2), t=(2,2), beta=(1, inf)"),
}


def builtin_hierarchical(id: str) -> Callable:
    """Vectorized builtin regression function on (n, p) inputs; |f| <= 1 on [0, 1]^p."""
    try:
        return BUILTINS[id][0]
    except KeyError:
        raise ConfigError(f"unknown hierarchical function {id!r}; choose from {sorted(BUILTINS)}") from None


@dataclass(frozen=True)
class TeacherSpec:
    """Ground truth regression model.

    ``kind`` is ``"network"`` (clipped sparse network ``theta`` on ``arch``)
    or ``"builtin"`` (one of :data:`BUILTINS`).  Gaussian noise declares
    (sigma, Gamma) = (sigma_noise, sigma_noise); uniform noise on [-a, a]
    declares (a, a).
    """

    kind: str
    p: int
    sigma_noise: float = 0.1
    noise: str = "gaussian"
    input_law: str = "uniform"
    K: float = 1.0
    C: float = 1.0
    builtin: str | None = None
    arch: NetworkArch | None = None
    theta: np.ndarray | None = None
    active: ActiveSet | None = None

    def __post_init__(self):
        if self.kind not in ("network", "builtin"):
            raise ConfigError(f"unknown teacher kind {self.kind!r}")
        if self.noise not in NOISE_LAWS:
            raise ConfigError(f"unknown noise law {self.noise!r}")
        if self.input_law not in INPUT_LAWS:
            raise ConfigError(f"unknown input law {self.input_law!r}")
        if self.sigma_noise < 0:
            raise ConfigError("sigma_noise must be nonnegative")
        if self.kind == "builtin":
            if self.builtin not in BUILTINS:
                raise ConfigError(f"unknown hierarchical function {self.builtin!r}")
            if self.p < BUILTINS[self.builtin][1]:
                raise ConfigError(f"builtin {self.builtin!r} needs p >= {BUILTINS[self.builtin][1]}")
        elif self.arch is None or self.theta is None:
            raise ConfigError("network teacher needs arch and theta")

    @property
    def noise_constants(self) -> tuple[float, float]:
        return self.sigma_noise, self.sigma_noise

    def truth(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "network":
            return forward_clipped(self.arch, self.theta, X)
        return np.clip(builtin_hierarchical(self.builtin)(X), -self.C, self.C)

    def sample_inputs(self, m: int, rng) -> np.ndarray:
        if self.input_law == "uniform":
            return rng.random((m, self.p))
        # spherical Gaussian with E|X|^2 = p K
        return math.sqrt(self.K) * rng.standard_normal((m, self.p))

    def sample_noise(self, m: int, rng) -> np.ndarray:
        if self.noise == "gaussian":
            return self.sigma_noise * rng.standard_normal(m)
        return rng.uniform(-self.sigma_noise, self.sigma_noise, size=m)

    def describe(self) -> dict:
        d = {"kind": self.kind, "p": self.p, "sigma_noise": self.sigma_noise, "noise": self.noise,
             "input_law": self.input_law, "K": self.K, "C": self.C}
        if self.kind == "builtin":
            d["builtin"] = self.builtin
        else:
            d["arch"] = [self.arch.p, self.arch.L, self.arch.r]
            d["active"] = self.active.indices.tolist() if self.active is not None else None
            d["theta"] = [repr(float(t)) for t in self.theta]
        return d


def sample_dataset(spec: TeacherSpec, n: int, seed) -> Dataset:
    """n i.i.d. pairs Y = f(X) + eps."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    X = spec.sample_inputs(n, rng)
    eps = spec.sample_noise(n, rng)
    return Dataset(X, spec.truth(X) + eps)


def has_connected_path(arch: NetworkArch, active: ActiveSet) -> bool:
    """True if active weights link some input to the output through every layer."""
    mask = active.mask
    reach = np.ones(arch.p, dtype=bool)
    for w, shape, _ in arch.layers:
        Wm = mask[w].reshape(shape)
        reach = (Wm[:, reach]).any(axis=1)
        if not reach.any():
            return False
    return bool(reach[0])


def _random_path(arch: NetworkArch, rng) -> list[int]:
    idx = []
    prev = int(rng.integers(arch.p))
    for l, (w, (fan_out, fan_in), _) in enumerate(arch.layers):
        unit = 0 if l == arch.L else int(rng.integers(fan_out))
        idx.append(w.start + unit * fan_in + prev)
        prev = unit
    return idx


def teacher_network(arch: NetworkArch, sparsity: int, seed, sigma_noise: float = 0.1,
                    noise: str = "gaussian", input_law: str = "uniform",
                    min_variance: float = 1e-3, max_retries: int = 100) -> TeacherSpec:
    """Random sparse teacher whose active set contains an input-to-output path.

    The path is drawn first and the remaining active indices uniformly from
    the rest; active weights are Uniform[-B, B].  Candidates whose clipped
    output has variance below ``min_variance`` on Uniform inputs (dead ReLU
    paths) are redrawn.
    """
    P = arch.P
    if not 1 <= sparsity <= P:
        raise ConfigError(f"sparsity must lie in [1, {P}]")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        if sparsity < arch.L + 1:
            break
        path = _random_path(arch, rng)
        rest = np.setdiff1d(np.arange(P), path)
        extra = rng.choice(rest, size=sparsity - len(path), replace=False)
        active = ActiveSet(np.concatenate([path, extra]), P)
        theta = np.zeros(P)
        theta[active.indices] = rng.uniform(-arch.B, arch.B, size=sparsity)
        probe = rng.random((2000, arch.p)) if input_law == "uniform" else rng.standard_normal((2000, arch.p))
        if np.var(forward_clipped(arch, theta, probe)) < min_variance:
            continue
        return TeacherSpec("network", arch.p, sigma_noise, noise, input_law, C=arch.C,
                           arch=arch, theta=theta, active=active)
    raise RuntimeError(f"no connected teacher with sparsity {sparsity} after {max_retries} attempts")


def write_dataset_csv(data: Dataset, path) -> None:
    """Header x1..xp,y followed by one row per sample (round-trip float repr)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(data.p)] + ["y"])
        for x, y in zip(data.X, data.Y):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[-1] != "y" or header[:-1] != [f"x{j + 1}" for j in range(len(header) - 1)]:
        raise ValueError(f"{path}: expected header x1..xp,y, got {header}")
    arr = np.array(body, dtype=float).reshape(len(body), len(header))
    return Dataset(arr[:, :-1], arr[:, -1])
