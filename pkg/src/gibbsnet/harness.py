"""Experiment configuration, oracle benchmark and the (n, seed) sweep runner."""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import mala, rjmcmc
from .datagen import ConfigError, TeacherSpec, sample_dataset, teacher_network
from .estimators import PosteriorDraw, PosteriorMean, default_lambda
from .net_core import ActiveSet, NetworkArch, NetworkRisk
from .risk import Dataset, excess_risk_on, risk_report

log = logging.getLogger(__name__)

RESULT_COLUMNS = ["n", "seed", "sampler", "estimator", "excess_risk", "excess_risk_stderr",
                  "empirical_risk", "acceptance_rate", "median_cardinality", "wall_ms"]
ESTIMATORS = ("draw", "mean", "kept_avg")

DEFAULTS = {
    "name": "experiment",
    "teacher": {
        "kind": "network",      # network | builtin
        "arch": None,           # [p, L, r] of a network teacher; defaults to the model arch
        "sparsity": 12,
        "seed": 1000,           # teacher seed; per_seed adds the run seed
        "per_seed": True,
        "builtin": "a",
        "p": None,              # input dimension of builtin teachers; defaults to arch.p
        "sigma_noise": 0.1,
        "noise": "gaussian",
        "input_law": "uniform",
        "K": 1.0,
    },
    "arch": {"p": 5, "L": 2, "r": 8, "B": 1.0, "C": 1.0},
    "sampler": {
        "kind": "rjmcmc",       # mala | rjmcmc
        "lam": None,            # explicit inverse temperature
        "xi0": None,            # lam = n / xi0; None -> 16(C^2+s^2) + 16 C max(G, 2C)
        "gamma": None,          # None -> pilot tuning
        "s": None,              # None -> sqrt(2 gamma / lam)
        "burn_in": 30000,
        "gap": 10,
        "n_keep": 50,
        "pilot_rounds": 20,
        "pilot_steps": 200,
        "sparsity_base": 2.0,
    },
    "n_grid": [500, 1000, 2000, 4000],
    "seeds": [0, 1, 2, 3, 4],
    "m_eval": 100000,
    "output_dir": None,
    "record_wall_time": False,
}


def _merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path + key!r} must be a mapping")
            out[key] = _merge(base[key], value, path + key + ".")
        else:
            out[key] = value
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment settings (see ``DEFAULTS`` for the schema)."""

    raw: dict

    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        cfg = cls(_merge(DEFAULTS, d or {}))
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data)

    def with_overrides(self, assignments: list[str]) -> "ExperimentConfig":
        """Apply ``dotted.key=value`` overrides (values parsed as YAML scalars)."""
        d = copy.deepcopy(self.raw)
        for item in assignments:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, value = item.split("=", 1)
            *parents, leaf = key.strip().split(".")
            node = d
            for part in parents:
                if not isinstance(node.get(part), dict):
                    raise ConfigError(f"unknown config key {key!r}")
                node = node[part]
            if leaf not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node[leaf] = yaml.safe_load(value)
        return ExperimentConfig.from_dict(d)

    def validate(self) -> None:
        r = self.raw
        try:
            grid = [int(n) for n in r["n_grid"]]
            if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError("n_grid must be a nonempty strictly increasing list of positive sizes")
            if not r["seeds"] or any(int(s) < 0 for s in r["seeds"]):
                raise ConfigError("need at least one nonnegative seed")
            if r["sampler"]["kind"] not in ("mala", "rjmcmc"):
                raise ConfigError(f"unknown sampler {r['sampler']['kind']!r}")
            if int(r["m_eval"]) < 2:
                raise ConfigError("m_eval must be >= 2")
            self.sampler_config(n=grid[0], seed=0)
            if r["teacher"]["kind"] == "network":
                if r["teacher"]["arch"] is not None and len(r["teacher"]["arch"]) != 3:
                    raise ConfigError("teacher.arch must be [p, L, r]")
                if self.teacher_arch.p != self.arch.p:
                    raise ConfigError("teacher and model input dimensions differ")
            elif r["teacher"]["kind"] == "builtin":
                if self.teacher(0).p != self.arch.p:
                    raise ConfigError("teacher and model input dimensions differ")
            else:
                raise ConfigError(f"unknown teacher kind {r['teacher']['kind']!r}")
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    @property
    def arch(self) -> NetworkArch:
        a = self.raw["arch"]
        return NetworkArch(int(a["p"]), int(a["L"]), int(a["r"]), float(a["B"]), float(a["C"]))

    @property
    def teacher_arch(self) -> NetworkArch:
        t = self.raw["teacher"]
        if t["arch"] is None:
            return self.arch
        p, L, r = t["arch"]
        return NetworkArch(int(p), int(L), int(r), self.arch.B, self.arch.C)

    def teacher(self, seed: int) -> TeacherSpec:
        t = self.raw["teacher"]
        tseed = int(t["seed"]) + (int(seed) if t["per_seed"] else 0)
        if t["kind"] == "network":
            return teacher_network(self.teacher_arch, int(t["sparsity"]), tseed, float(t["sigma_noise"]),
                                   t["noise"], t["input_law"])
        p = int(t["p"] or self.arch.p)
        return TeacherSpec("builtin", p, float(t["sigma_noise"]), t["noise"], t["input_law"],
                           K=float(t["K"]), C=self.arch.C, builtin=t["builtin"])

    def lam(self, n: int) -> float:
        s = self.raw["sampler"]
        if s["lam"] is not None:
            return float(s["lam"])
        if s["xi0"] is not None:
            return n / float(s["xi0"])
        sigma = float(self.raw["teacher"]["sigma_noise"])
        return default_lambda(n, self.arch.C, sigma, sigma)

    def sampler_config(self, n: int, seed: int):
        s = self.raw["sampler"]
        kw = dict(lam=self.lam(n), gamma=s["gamma"], s=s["s"], burn_in=int(s["burn_in"]), gap=int(s["gap"]),
                  n_keep=int(s["n_keep"]), seed=seed, bound=self.arch.B,
                  pilot_rounds=int(s["pilot_rounds"]), pilot_steps=int(s["pilot_steps"]))
        if s["kind"] == "rjmcmc":
            return rjmcmc.RjmcmcConfig(**kw, sparsity_base=float(s["sparsity_base"]))
        return mala.MalaConfig(**kw)

    def to_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True)


@dataclass(frozen=True)
class OracleBenchmark:
    active: ActiveSet
    theta: np.ndarray
    excess_risk: float
    excess_risk_stderr: float


def approximate_oracle(arch: NetworkArch, active: ActiveSet, truth, budget: int, input_sampler=None,
                       m: int = 20000, restarts: int = 20, seed=0, init=None) -> OracleBenchmark:
    """Multi-start projected gradient descent for the best network on S_I.

    Minimizes a Monte-Carlo estimate of E[(f_theta(X) - f(X))^2] with
    ``budget`` iterations per restart (backtracking step size, projection
    onto S_I and the box).  The first restart starts from ``init`` when
    given.  The returned excess risk, evaluated on fresh inputs,
    upper-bounds the true oracle value up to MC error.
    """
    if len(active) == 0:
        raise ValueError("oracle needs a nonempty active set")
    rng = np.random.default_rng(seed)
    if input_sampler is None:
        def input_sampler(k, g):
            return g.random((k, arch.p))
    X = input_sampler(m, rng)
    objective = NetworkRisk(arch, Dataset(X, truth(X)))
    mask = active.mask
    best = None
    for k in range(restarts):
        if k == 0 and init is not None:
            theta = np.array(init, dtype=float)
            if not active.consistent(theta) or np.any(np.abs(theta) > arch.B):
                raise ValueError("init must lie in S_I")
        else:
            theta = np.zeros(arch.P)
            theta[mask] = rng.uniform(-arch.B, arch.B, size=len(active))
        risk, grad = objective.value_and_grad(theta)
        t = 1.0
        for _ in range(budget):
            grad[~mask] = 0.0
            cand = np.clip(theta - t * grad, -arch.B, arch.B)
            cand_risk, cand_grad = objective.value_and_grad(cand)
            if cand_risk <= risk:
                theta, risk, grad = cand, cand_risk, cand_grad
                t *= 1.5
            else:
                t *= 0.5
        if best is None or risk < best[1]:
            best = (theta, risk)
        if budget == 0:
            break
    X_eval = input_sampler(m, rng)
    est, se = excess_risk_on(PosteriorDraw(arch, best[0]), truth, X_eval)
    return OracleBenchmark(active, best[0], est, se)


def _cell_seeds(seed: int, n: int):
    ss = np.random.SeedSequence([int(seed), int(n)])
    data_ss, chain_ss = ss.spawn(2)
    return int(data_ss.generate_state(1)[0]), int(chain_ss.generate_state(1)[0])


def eval_inputs(cfg: ExperimentConfig, teacher: TeacherSpec, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xE7A1]))
    return teacher.sample_inputs(int(cfg.raw["m_eval"]), rng)


def run_cell(cfg: ExperimentConfig, n: int, seed: int) -> list[dict]:
    """One (n, seed) cell: data, chain, and the three estimator rows."""
    t0 = time.perf_counter()
    arch = cfg.arch
    teacher = cfg.teacher(seed)
    data_seed, chain_seed = _cell_seeds(seed, n)
    data = sample_dataset(teacher, n, data_seed)
    objective = NetworkRisk(arch, data)
    scfg = cfg.sampler_config(n, chain_seed)
    kind = cfg.raw["sampler"]["kind"]
    if kind == "rjmcmc":
        res = rjmcmc.run(scfg, objective)
        cards = [len(a) for a in res.kept_active]
    else:
        res = mala.run(scfg, objective)
        cards = [int(np.count_nonzero(t)) for t in res.kept]
    X_eval = eval_inputs(cfg, teacher, seed)
    draw = PosteriorDraw(arch, res.draw)
    mean = PosteriorMean(arch, tuple(res.kept))
    reports = {"draw": risk_report(draw, teacher.truth, data, X_eval),
               "mean": risk_report(mean, teacher.truth, data, X_eval)}

    # average excess risk of the kept draws on the same evaluation points
    ft = teacher.truth(X_eval)
    sq = np.zeros(len(X_eval))
    emp = 0.0
    for theta in res.kept:
        f = PosteriorDraw(arch, theta)(X_eval)
        sq += (f - ft) ** 2
        emp += float(np.mean((data.Y - PosteriorDraw(arch, theta)(data.X)) ** 2))
    sq /= len(res.kept)
    kept_est = float(np.mean(sq))
    kept_se = float(np.std(sq, ddof=1) / np.sqrt(sq.size))
    wall = (time.perf_counter() - t0) * 1000 if cfg.raw["record_wall_time"] else None
    rows = []
    common = dict(n=int(n), seed=int(seed), sampler=kind, acceptance_rate=res.acceptance_rate,
                  median_cardinality=float(np.median(cards)), wall_ms=wall)
    for est in ESTIMATORS:
        if est == "kept_avg":
            vals = dict(excess_risk=kept_est, excess_risk_stderr=kept_se, empirical_risk=emp / len(res.kept))
        else:
            r = reports[est]
            vals = dict(excess_risk=r.excess_risk, excess_risk_stderr=r.excess_risk_stderr,
                        empirical_risk=r.empirical_risk)
        rows.append({**common, "estimator": est, **vals})
    log.info("n=%d seed=%d: draw excess %.3g, median |I| %.1f", n, seed, reports["draw"].excess_risk,
             common["median_cardinality"])
    return rows


def _run_cell_args(args):
    raw, n, seed = args
    return run_cell(ExperimentConfig(raw), n, seed)


def worker_count(n_cells: int) -> int:
    env = os.environ.get("GSN_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_cells))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_results_csv(rows: list[dict], cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    buf.write(f"# gibbsnet config: {cfg.to_json()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])
    return buf.getvalue()


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    out = []
    for row in csv.DictReader(lines):
        out.append({
            "n": int(row["n"]), "seed": int(row["seed"]), "sampler": row["sampler"],
            "estimator": row["estimator"], "excess_risk": float(row["excess_risk"]),
            "excess_risk_stderr": float(row["excess_risk_stderr"]),
            "empirical_risk": float(row["empirical_risk"]),
            "acceptance_rate": float(row["acceptance_rate"]),
            "median_cardinality": float(row["median_cardinality"]),
            "wall_ms": float(row["wall_ms"]) if row["wall_ms"] else None,
        })
    return out


def summarize(rows: list[dict]) -> list[dict]:
    """Median and quartiles of excess risk per (sampler, estimator, n)."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["sampler"], row["estimator"], row["n"]), []).append(row)
    out = []
    for (sampler, est, n), rs in sorted(groups.items()):
        ex = np.array([r["excess_risk"] for r in rs])
        card = np.array([r["median_cardinality"] for r in rs])
        q1, med, q3 = np.percentile(ex, [25, 50, 75])
        out.append({"sampler": sampler, "estimator": est, "n": n, "count": len(rs),
                    "median": float(med), "q1": float(q1), "q3": float(q3),
                    "median_cardinality": float(np.median(card))})
    return out


def run_experiment(cfg: ExperimentConfig, output_dir=None, workers: int | None = None) -> list[dict]:
    """Run every (n, seed) cell; write results.csv and summary.json when an output dir is set."""
    cells = [(n, s) for s in cfg.raw["seeds"] for n in cfg.raw["n_grid"]]
    workers = workers or worker_count(len(cells))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_cell_args, [(cfg.raw, n, s) for n, s in cells]))
    else:
        parts = [run_cell(cfg, n, s) for n, s in cells]
    rows = [row for part in parts for row in part]
    rows.sort(key=lambda r: (r["n"], r["seed"], ESTIMATORS.index(r["estimator"])))

    output_dir = output_dir or cfg.raw["output_dir"]
    if output_dir is not None:
        out = Path(output_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "results.csv").write_text(format_results_csv(rows, cfg))
            summary = {"config": cfg.raw, "summary": summarize(rows)}
            (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise OSError(f"writing results to {out}: {exc}") from exc
    return rows
