"""Command-line entry point: ``gibbsnet {run,sample,check,gen}``.

Exit codes: 0 success, 2 configuration or usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checks, harness, mala, rjmcmc
from .datagen import ConfigError, TeacherSpec, sample_dataset, teacher_network, write_dataset_csv
from .estimators import PosteriorDraw, PosteriorMean, default_lambda
from .net_core import NetworkArch, NetworkRisk
from .risk import risk_report

log = logging.getLogger("gibbsnet")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
CHECK_TOL = 1e-8


def _arch(text: str) -> tuple[int, int, int]:
    try:
        p, L, r = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected p,L,r, got {text!r}") from None
    return p, L, r


def _teacher(args, arch: NetworkArch) -> TeacherSpec:
    kind, _, value = args.teacher.partition(":")
    if kind == "builtin":
        return TeacherSpec("builtin", arch.p, args.sigma_noise, args.noise, args.input_law,
                           C=arch.C, builtin=value)
    if kind == "network":
        try:
            sparsity = int(value)
        except ValueError:
            raise ConfigError(f"network teacher needs a sparsity, e.g. network:12; got {args.teacher!r}") from None
        seed = args.teacher_seed if args.teacher_seed is not None else args.seed
        return teacher_network(arch, sparsity, seed, args.sigma_noise, args.noise, args.input_law)
    raise ConfigError(f"teacher must be builtin:<id> or network:<sparsity>, got {args.teacher!r}")


def _model_arch(args) -> NetworkArch:
    try:
        return NetworkArch(*args.arch, B=args.bound, C=args.clip)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _add_data_args(sp):
    sp.add_argument("--teacher", default="builtin:a", help="builtin:<a|b|c> or network:<sparsity>")
    sp.add_argument("--teacher-seed", type=int, default=None, help="seed of a network teacher (default: --seed)")
    sp.add_argument("--arch", type=_arch, default=(5, 2, 8), help="p,L,r (default 5,2,8)")
    sp.add_argument("--bound", type=float, default=1.0, help="parameter box half-width B")
    sp.add_argument("--clip", type=float, default=1.0, help="output clip level C")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sigma-noise", type=float, default=0.1)
    sp.add_argument("--noise", choices=("gaussian", "uniform"), default="gaussian")
    sp.add_argument("--input-law", choices=("uniform", "gaussian"), default="uniform")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gibbsnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("run", help="run an experiment sweep from a YAML config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry, e.g. sampler.burn_in=5000")
    sp.add_argument("--output-dir", default=None)
    sp.add_argument("--workers", type=int, default=None, help="worker processes (default: GSN_THREADS or CPU count)")

    sp = sub.add_parser("sample", help="run one chain and report its estimators")
    _add_data_args(sp)
    sp.add_argument("--sampler", choices=("mala", "rjmcmc"), default="rjmcmc")
    sp.add_argument("--lam", type=float, default=None, help="inverse temperature (default n / Xi0)")
    sp.add_argument("--xi0", type=float, default=None, help="use lam = n / xi0")
    sp.add_argument("--gamma", type=float, default=None, help="step size (default: pilot-tuned)")
    sp.add_argument("--burn-in", type=int, default=5000)
    sp.add_argument("--gap", type=int, default=10)
    sp.add_argument("--n-keep", type=int, default=50)
    sp.add_argument("--sparsity-base", type=float, default=2.0)
    sp.add_argument("--m-eval", type=int, default=100000)
    sp.add_argument("--trace", default=None, help="write the per-step trace CSV here")
    sp.add_argument("-o", "--output", default=None, help="write the JSON report here instead of stdout")

    sp = sub.add_parser("check", help="run numerical self-checks")
    sp.add_argument("--suite", choices=sorted(checks.SUITES) + ["all"], default="all")
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("gen", help="export a synthetic dataset as CSV")
    _add_data_args(sp)
    sp.add_argument("-o", "--output", required=True)
    return parser


def cmd_run(args) -> int:
    cfg = harness.ExperimentConfig.from_file(args.config).with_overrides(args.set)
    rows = harness.run_experiment(cfg, output_dir=args.output_dir, workers=args.workers)
    for cell in harness.summarize(rows):
        print(f"{cell['sampler']:7s} {cell['estimator']:9s} n={cell['n']:<6d} "
              f"median={cell['median']:.4g} q1={cell['q1']:.4g} q3={cell['q3']:.4g} "
              f"|I|~{cell['median_cardinality']:.1f}")
    return EXIT_OK


def cmd_sample(args) -> int:
    arch = _model_arch(args)
    teacher = _teacher(args, arch)
    if teacher.p != arch.p:
        raise ConfigError("teacher and model input dimensions differ")
    if args.n < 1:
        raise ConfigError("--n must be positive")
    data = sample_dataset(teacher, args.n, args.seed)
    if args.lam is not None:
        lam = args.lam
    elif args.xi0 is not None:
        lam = args.n / args.xi0
    else:
        lam = default_lambda(args.n, arch.C, args.sigma_noise, args.sigma_noise)
    kw = dict(lam=lam, gamma=args.gamma, burn_in=args.burn_in, gap=args.gap, n_keep=args.n_keep,
              seed=args.seed, bound=arch.B)
    try:
        cfg = (rjmcmc.RjmcmcConfig(**kw, sparsity_base=args.sparsity_base) if args.sampler == "rjmcmc"
               else mala.MalaConfig(**kw))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    objective = NetworkRisk(arch, data)
    if args.sampler == "rjmcmc":
        res = rjmcmc.run(cfg, objective, trace_path=args.trace)
        cards = [len(a) for a in res.kept_active]
    else:
        res = mala.run(cfg, objective, trace_path=args.trace)
        cards = [int(np.count_nonzero(t)) for t in res.kept]
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0xE7A1]))
    X_eval = teacher.sample_inputs(args.m_eval, rng)
    out = {
        "config": {k: v for k, v in vars(args).items() if k not in ("func", "output")},
        "lam": lam,
        "gamma": res.config.gamma,
        "acceptance_rate": res.acceptance_rate,
        "median_cardinality": float(np.median(cards)),
        "draw": risk_report(PosteriorDraw(arch, res.draw), teacher.truth, data, X_eval).to_dict(),
        "mean": risk_report(PosteriorMean(arch, tuple(res.kept)), teacher.truth, data, X_eval).to_dict(),
    }
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args) -> int:
    names = sorted(checks.SUITES) if args.suite == "all" else [args.suite]
    ok = True
    for name in names:
        dev = checks.SUITES[name](seed=args.seed)
        passed = dev <= CHECK_TOL
        ok &= passed
        print(f"{name}: max deviation {dev:.3e} ({'ok' if passed else 'FAIL'}, tolerance {CHECK_TOL:g})")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_gen(args) -> int:
    arch = _model_arch(args)
    teacher = _teacher(args, arch)
    if args.n < 1:
        raise ConfigError("--n must be positive")
    data = sample_dataset(teacher, args.n, args.seed)
    write_dataset_csv(data, args.output)
    meta = {"seed": args.seed, "n": args.n, "teacher": teacher.describe(),
            "arch": list(args.arch), "bound": args.bound, "clip": args.clip}
    Path(str(args.output) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sample": cmd_sample, "check": cmd_check, "gen": cmd_gen}


def cli_entry(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"gibbsnet: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level report
        log.debug("failure", exc_info=True)
        print(f"gibbsnet: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(cli_entry())


if __name__ == "__main__":
    main()
