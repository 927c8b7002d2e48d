"""Command line driver.

    ffm train <cfg.json> [--out DIR] [--seed N] [--workers N]
    ffm eval <checkpoint.json> <cfg.json>
    ffm bench <bench.json> [--out DIR]
    ffm selftest [--precision 32] [--mutate sign_flip]
    ffm inspect <checkpoint.json>

Exit codes: 0 success, 1 validation/configuration error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import aggregator, bench, cell, models, selftest, tasks, trainer
from . import numerics as nx
from .config import BenchConfig, TrainConfig, load

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2

VALIDATION_ERRORS = (
    ValidationError,
    FileNotFoundError,
    json.JSONDecodeError,
    cell.ConfigError,
    tasks.TaskConfigError,
    aggregator.ChunkBoundError,
    nx.DimensionError,
)
NUMERIC_ERRORS = (trainer.Divergence, aggregator.StabilityError, cell.NumericFailure)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ffm", description="FFM sequence memory toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--workers", type=int, default=None, help="prefix-sum worker count")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train", parents=[common], help="train a model from a JSON config")
    p.add_argument("config", type=Path)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a config's task")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("config", type=Path)

    p = sub.add_parser("bench", parents=[common], help="time training passes")
    p.add_argument("config", type=Path)

    p = sub.add_parser("selftest", parents=[common], help="run the numerical self-checks")
    p.add_argument("--precision", type=int, choices=(32, 64), default=64)
    p.add_argument("--mutate", choices=("sign_flip",), default=None)

    p = sub.add_parser("inspect", parents=[common], help="print decay/context interpretability tables")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--beta", type=float, default=None, help="durability threshold (default: checkpoint beta)")
    return ap


def _train(args) -> int:
    cfg = load(args.config, TrainConfig)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    out = args.out or Path("runs") / args.config.stem
    record = trainer.train(cfg, out)
    print(json.dumps({"out": str(out), **record.final}))
    return EXIT_OK


def _eval(args) -> int:
    if not args.checkpoint.exists():
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    cfg = load(args.config, TrainConfig)
    seed = cfg.seed if args.seed is None else args.seed
    metrics = trainer.evaluate(args.checkpoint, cfg.task, cfg.eval_batch, seed)
    print(json.dumps(metrics))
    return EXIT_OK


def _bench(args) -> int:
    cfg = load(args.config, BenchConfig)
    workers = [args.workers] if args.workers is not None else cfg.workers
    report = bench.bench_train_pass(
        cfg.models, cfg.T, workers, cfg.d, cfg.m, cfg.c, cfg.batch, cfg.repeats, cfg.warmup, cfg.chunk,
        cfg.seed if args.seed is None else args.seed,
    )
    print(report.table())
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        report.to_csv(args.out / "bench.csv")
    return EXIT_OK


def _selftest(args) -> int:
    report = selftest.selftest(bits=args.precision, mutate=args.mutate, seed=args.seed or 0)
    print(report.text())
    return EXIT_OK if report.passed else EXIT_NUMERIC


def _fmt_row(values) -> str:
    return " ".join(f"{v:10.3f}" if np.isfinite(v) else f"{'inf':>10}" for v in values)


def _inspect(args) -> int:
    if not args.checkpoint.exists():
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    model = models.load(args.checkpoint)
    if model.kind != "ffm":
        print(f"kind={model.kind}: no decay/context parameters to inspect")
        return EXIT_OK
    core = model.core
    beta = core.beta if args.beta is None else args.beta
    alpha = core.decay.alpha_values()
    print(f"kind=ffm d={core.d} m={core.m} c={core.c} t_e={core.t_e} variant={core.variant.to_dict()}")
    print(f"beta={beta:g}")
    print(f"alpha: min={alpha.min():.6g} max={alpha.max():.6g} (clamp {core.decay.alpha_max:.6g})")
    t_alpha = cell.trace_durability(core, beta)
    t_omega = cell.context_period(core)
    print("trace durability t_alpha (steps to decay to beta), per trace row:")
    for j, row in enumerate(t_alpha):
        print(f"  trace {j:3d}: {_fmt_row(row)}")
    print("context period t_omega (steps), per context column:")
    for j, row in enumerate(t_omega):
        print(f"  trace {j:3d}: {_fmt_row(row)}")
    return EXIT_OK


COMMANDS = {"train": _train, "eval": _eval, "bench": _bench, "selftest": _selftest, "inspect": _inspect}


def run(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.workers is not None:
        if args.workers < 1:
            print("error: --workers must be >= 1", file=sys.stderr)
            return EXIT_INVALID
        nx.set_workers(args.workers)
    try:
        return COMMANDS[args.cmd](args)
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
