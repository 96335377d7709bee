"""Command line entry point.

    cssl-har run --config exp.ini [--mode kaizen|cassle|no-distill] [--ssl byol|mocov2p]
                 [--lambda a+b] [--seed N] [--out DIR]
    cssl-har sweep --config exp.ini --lambdas "0.5+0.0,0.5+0.5"
    cssl-har metrics --matrix run/matrix.csv
    cssl-har plot --run run/

Exit status: 0 on success, 1 for configuration errors, 2 for failures while
running. The cause is printed as one line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import config as cfgmod
from .config import ConfigError
from .continual import LambdaSchedule
from .plots import emit_plots
from .runner import OUTPUT_ENV, metrics_from_matrix, run_experiment, sweep

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage mistakes count as configuration errors
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cssl-har", description="Continual self-supervised HAR experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="train one continual run")
    run.add_argument("--config", required=True)
    run.add_argument("--mode", choices=["kaizen", "cassle", "no-distill"])
    run.add_argument("--ssl", choices=["byol", "mocov2p"])
    run.add_argument("--lambda", dest="schedule", metavar="A+B")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or ./out)")

    sw = sub.add_parser("sweep", help="one run per importance schedule")
    sw.add_argument("--config", required=True)
    sw.add_argument("--lambdas", required=True, help='comma separated, e.g. "0.5+0.0,1.0+0.5"')
    sw.add_argument("--out")

    me = sub.add_parser("metrics", help="recompute summary metrics from a matrix.csv")
    me.add_argument("--matrix", required=True)
    me.add_argument("--baseline", help="baseline.csv (default: next to the matrix)")

    pl = sub.add_parser("plot", help="regenerate the SVG plots of a run")
    pl.add_argument("--run", required=True)
    return p


def _load(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config)
    updates = {}
    if getattr(args, "mode", None):
        updates["train.mode"] = args.mode
    if getattr(args, "ssl", None):
        updates["train.ssl_method"] = args.ssl
    if getattr(args, "schedule", None):
        updates["train.schedule"] = args.schedule
    if getattr(args, "seed", None) is not None:
        updates["run.seed"] = str(args.seed)
    return cfgmod.override(cfg, updates) if updates else cfg


def _dispatch(args) -> None:
    if args.command == "run":
        cfg = _load(args)
        run_dir = run_experiment(cfg, args.out)
        print(run_dir)
    elif args.command == "sweep":
        cfg = _load(args)
        try:
            schedules = [LambdaSchedule.parse(s) for s in args.lambdas.split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigError(f"--lambdas: {exc}") from None
        if not schedules:
            raise ConfigError("--lambdas is empty")
        print(sweep(cfg, schedules, args.out))
    elif args.command == "metrics":
        print(json.dumps(metrics_from_matrix(args.matrix, args.baseline), sort_keys=True, indent=2))
    elif args.command == "plot":
        for path in emit_plots(args.run):
            print(path)


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
