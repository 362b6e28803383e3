"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are collected in ``RESULTS`` and repeated in the pytest terminal
summary (see conftest.py), so they show up even without ``-s``.
"""

import itertools
import json
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from gibbsnet import checks, mala, rjmcmc
from gibbsnet.cli import cli_entry
from gibbsnet.harness import ExperimentConfig, read_results_csv, run_experiment
from gibbsnet.net_core import NetworkArch, forward_clipped, lipschitz_bound, risk_and_grad, unflatten
from gibbsnet.prior import MixturePrior, log_mixture_correction
from gibbsnet.risk import LinearRisk

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
RESULTS: list[str] = []


def report(k: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {k:2d} [{name}]: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS.append(line)
    print(line)


# 1. gradient correctness ------------------------------------------------------

def _near_kink(arch, theta, X, margin=1e-4):
    h = X.T
    for W, v in unflatten(arch, theta)[:-1]:
        h = W @ h + v[:, None]
        if np.any(np.abs(h) < margin):
            return True
        h = np.maximum(h, 0)
    W, v = unflatten(arch, theta)[-1]
    g = W[0] @ h + v[0]
    return bool(np.any(np.abs(np.abs(g) - arch.C) < margin))


def _instance(rng):
    while True:
        arch = NetworkArch(int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 7)))
        n = int(rng.integers(5, 31))
        X = rng.random((n, arch.p))
        Y = rng.normal(0, 0.5, n)
        theta = rng.uniform(-0.8, 0.8, arch.P)
        if _near_kink(arch, theta, X):
            continue
        grad = risk_and_grad(arch, theta, X, Y)[1]
        if np.linalg.norm(grad) < 1e-8:
            continue
        return arch, theta, X, Y, grad


def test_criterion_01_gradient_vs_finite_differences():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        arch, theta, X, Y, grad = _instance(rng)
        fd = np.empty(arch.P)
        for i in range(arch.P):
            h = 1e-6 * max(1.0, abs(theta[i]))
            e = np.zeros(arch.P)
            e[i] = h
            fd[i] = (risk_and_grad(arch, theta + e, X, Y)[0] - risk_and_grad(arch, theta - e, X, Y)[0]) / (2 * h)
        worst = max(worst, np.linalg.norm(grad - fd) / np.linalg.norm(fd))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 10
    report(1, "gradient", ok, f"max relative error {worst:.2e} (<= 1e-6), {elapsed:.1f}s (< 10s)")
    assert ok


# 2. Lipschitz bound -----------------------------------------------------------

def test_criterion_02_lipschitz_bound():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    violations = 0
    total = 0
    for p, L, r in checks.LIPSCHITZ_ARCHS:
        arch = NetworkArch(p, L, r)
        for _ in range(1000):
            t, u = rng.uniform(-arch.B, arch.B, (2, arch.P))
            if rng.random() < 0.5:
                # close pairs probe the local regime
                u = np.clip(t + rng.uniform(-1e-3, 1e-3, arch.P), -arch.B, arch.B)
            x = rng.uniform(-2, 2, p)
            lhs = abs(forward_clipped(arch, t, x) - forward_clipped(arch, u, x))
            violations += lhs > lipschitz_bound(arch, x) * np.max(np.abs(t - u))
            total += 1
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 5
    report(2, "lipschitz", ok, f"{violations} violations in {total} triples, {elapsed:.1f}s (< 5s)")
    assert ok


# 3. KL closed forms ------------------------------------------------------------

def test_criterion_03_kl_closed_forms():
    t0 = time.perf_counter()
    dev = checks.kl_deviation(n=200, seed=3)
    mix = 0.0
    for P in range(1, 60):
        for k in range(1, P + 1):
            exact = Fraction(2 ** P - 1, 2 ** P) * 2 ** k * math.comb(P, k)
            mix = max(mix, abs(log_mixture_correction(P, k) - math.log(exact)) / max(1.0, math.log(exact)))
    elapsed = time.perf_counter() - t0
    ok = dev <= 1e-8 and mix <= 1e-13 and elapsed < 5
    report(3, "kl", ok, f"quadrature deviation {dev:.1e} (<= 1e-8), mixture term relative deviation "
                        f"{mix:.1e} (float rounding), {elapsed:.1f}s (< 5s)")
    assert ok


# 4. Donsker-Varadhan -----------------------------------------------------------

def test_criterion_04_donsker_varadhan():
    t0 = time.perf_counter()
    eq, viol = checks.dv_deviation(n=50, n_nu=100, seed=4)
    elapsed = time.perf_counter() - t0
    ok = eq <= 1e-12 and viol <= 1e-13 and elapsed < 1
    report(4, "donsker-varadhan", ok, f"equality gap {eq:.1e} (<= 1e-12), worst suboptimal excess {viol:.1e}, "
                                      f"{elapsed:.2f}s (< 1s)")
    assert ok


# 5. MALA exactness -----------------------------------------------------------

def test_criterion_05_mala_truncated_gaussian():
    t0 = time.perf_counter()
    lam, B = 10.0, 2.0
    cfg = mala.MalaConfig(lam=lam, burn_in=2000, gap=5, n_keep=20000, seed=55, bound=B)
    res = mala.run(cfg, LinearRisk([[1.0]], [0.0]))
    draws = np.array([t[0] for t in res.kept])
    sd = math.sqrt(1 / (2 * lam))
    truth_var = stats.truncnorm(-B / sd, B / sd, scale=sd).var()
    gap = checks.mala_balance_deviation(n=1000, seed=5, lam=lam, bound=B)
    elapsed = time.perf_counter() - t0
    rel = abs(draws.var() - truth_var) / truth_var
    ok = abs(draws.mean()) <= 0.02 and rel <= 0.10 and gap <= 1e-10 and elapsed < 30
    report(5, "mala", ok, f"mean {draws.mean():+.4f} (|.| <= 0.02), variance {draws.var():.5f} vs {truth_var:.5f} "
                          f"(rel {rel:.3f} <= 0.10), balance gap {gap:.1e} (<= 1e-10), "
                          f"acceptance {res.acceptance_rate:.2f}, {elapsed:.1f}s (< 30s)")
    assert ok


# 6. RJMCMC exactness ---------------------------------------------------------

def _active_set_posterior(obj, lam, B, prior):
    """Exact P(I | data) over active sets by 9-node Gauss-Legendre quadrature per coordinate."""
    nodes, weights = np.polynomial.legendre.leggauss(9)
    logp = {}
    for k in range(1, obj.dim + 1):
        for I in itertools.combinations(range(obj.dim), k):
            terms = []
            for combo in itertools.product(range(9), repeat=k):
                theta = np.zeros(obj.dim)
                theta[list(I)] = B * nodes[list(combo)]
                w = float(np.prod(weights[list(combo)])) * B ** k
                terms.append(math.log(w) - lam * obj.value(theta))
            lz = max(terms) + math.log(sum(math.exp(t - max(terms)) for t in terms))
            logp[I] = prior.log_weight_of_size(k) - k * math.log(2 * B) + lz
    m = max(logp.values())
    z = sum(math.exp(v - m) for v in logp.values())
    return {I: math.exp(v - m) / z for I, v in logp.items()}


def test_criterion_06_rjmcmc_active_set_posterior():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    X = rng.standard_normal((30, 3))
    obj = LinearRisk(X, X @ np.array([0.6, 0.0, 0.0]) + 0.5 * rng.standard_normal(30))
    lam, B = 10.0, 1.0
    exact = _active_set_posterior(obj, lam, B, MixturePrior(3, B))
    cfg = rjmcmc.RjmcmcConfig(lam=lam, burn_in=0, gap=1, n_keep=100000, seed=1, bound=B)
    res = rjmcmc.run(cfg, obj)
    counts: dict[tuple, int] = {}
    for a in res.kept_active:
        key = tuple(a.indices.tolist())
        counts[key] = counts.get(key, 0) + 1
    tv = 0.5 * sum(abs(counts.get(I, 0) / len(res.kept_active) - p) for I, p in exact.items())
    gap = checks.rj_balance_deviation(n=1000, seed=6)
    elapsed = time.perf_counter() - t0
    ok = tv < 0.05 and gap <= 1e-10 and elapsed < 120
    report(6, "rjmcmc", ok, f"total variation {tv:.4f} (< 0.05) over 1e5 steps, balance gap {gap:.1e} (<= 1e-10), "
                            f"{elapsed:.1f}s (< 120s)")
    assert ok


# 7-9. sparse-teacher trend -------------------------------------------------------

@pytest.fixture(scope="module")
def trend(tmp_path_factory):
    out = tmp_path_factory.mktemp("trend")
    cfg = ExperimentConfig.from_file(CONFIGS / "trend.yaml")
    t0 = time.perf_counter()
    run_experiment(cfg, output_dir=out)
    elapsed = time.perf_counter() - t0
    return cfg, read_results_csv(out / "results.csv"), json.loads((out / "summary.json").read_text()), elapsed


def _by(rows, estimator):
    return [r for r in rows if r["estimator"] == estimator]


def test_criterion_07_oracle_inequality_trend(trend):
    cfg, rows, _, elapsed = trend
    grid = cfg.raw["n_grid"]
    med = [float(np.median([r["excess_risk"] for r in _by(rows, "draw") if r["n"] == n])) for n in grid]
    nonincreasing = all(b <= a for a, b in zip(med, med[1:]))
    halved = med[-1] <= 0.5 * med[0]
    ok = nonincreasing and halved and elapsed < 600
    trail = ", ".join(f"n={n}: {m:.2e}" for n, m in zip(grid, med))
    report(7, "trend", ok, f"median draw excess risk {trail}; non-increasing {nonincreasing}, "
                           f"last/first {med[-1] / med[0]:.3f} (<= 0.5), {elapsed:.0f}s (< 600s)")
    assert ok


def test_criterion_08_sparsity_adaptation(trend):
    cfg, rows, _, _ = trend
    P = cfg.arch.P
    true_size = int(cfg.raw["teacher"]["sparsity"])
    draws = _by(rows, "draw")
    per_n = {n: float(np.median([r["median_cardinality"] for r in draws if r["n"] == n])) for n in cfg.raw["n_grid"]}
    ok = P >= 100 and all(m < P / 2 and true_size / 4 <= m <= 4 * true_size for m in per_n.values())
    runs = [r["median_cardinality"] for r in draws]
    report(8, "sparsity", ok, "median kept cardinality per n "
           + ", ".join(f"{n}: {m:g}" for n, m in per_n.items())
           + f" (< P/2 = {P / 2}, within [{true_size / 4:g}, {4 * true_size}]); per-run range {min(runs):g}-{max(runs):g}")
    assert ok


def test_criterion_09_posterior_mean_dominance(trend):
    _, rows, _, _ = trend
    cells = {}
    for r in rows:
        cells.setdefault((r["n"], r["seed"]), {})[r["estimator"]] = r
    bad = [k for k, d in cells.items()
           if d["mean"]["excess_risk"] > d["kept_avg"]["excess_risk"] + 3 * d["kept_avg"]["excess_risk_stderr"]]
    ok = not bad
    report(9, "posterior-mean", ok, f"{len(cells) - len(bad)}/{len(cells)} runs with mean excess <= "
                                    f"kept-draw average + 3 SE; failing cells {bad}")
    assert ok


# 10. determinism ---------------------------------------------------------------

def _twice(tmp_path, name, argv_fn, files):
    # same paths both times: outputs embed their own configuration
    d = tmp_path / name
    d.mkdir()
    blobs = []
    for _ in range(2):
        assert cli_entry(argv_fn(d)) == 0
        blobs.append([(d / f).read_bytes() for f in files])
        for f in files:
            (d / f).unlink()
    return blobs[0] == blobs[1]


def test_criterion_10_determinism(tmp_path):
    t0 = time.perf_counter()
    results = {
        "gen": _twice(tmp_path, "gen", lambda d: ["gen", "--teacher", "network:6", "--arch", "3,1,4", "--n", "200",
                                                  "--seed", "7", "-o", str(d / "d.csv")], ["d.csv", "d.csv.json"]),
        "sample-mala": _twice(tmp_path, "sm", lambda d: [
            "sample", "--sampler", "mala", "--teacher", "builtin:b", "--arch", "3,1,4", "--n", "100", "--seed", "3",
            "--burn-in", "300", "--n-keep", "20", "--m-eval", "500", "--xi0", "0.5",
            "--trace", str(d / "t.csv"), "-o", str(d / "r.json")], ["t.csv", "r.json"]),
        "sample-rjmcmc": _twice(tmp_path, "sr", lambda d: [
            "sample", "--sampler", "rjmcmc", "--teacher", "network:8", "--arch", "3,1,4", "--n", "100",
            "--seed", "3", "--burn-in", "300", "--n-keep", "20", "--m-eval", "500", "--xi0", "0.5",
            "--trace", str(d / "t.csv"), "-o", str(d / "r.json")], ["t.csv", "r.json"]),
        "run": _twice(tmp_path, "run", lambda d: [
            "run", "--config", str(CONFIGS / "smoke.yaml"), "--output-dir", str(d),
            "--set", "sampler.kind=rjmcmc"], ["results.csv", "summary.json"]),
    }
    elapsed = time.perf_counter() - t0
    ok = all(results.values())
    report(10, "determinism", ok, ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in results.items())
           + f" ({elapsed:.1f}s)")
    assert ok
