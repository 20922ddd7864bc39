"""Command-line entry point.

    mfgmesh run <config> --out <dir> [--force] [--workers N]
    mfgmesh plot <dir> [<dir> ...] [--out <dir>]
    mfgmesh exploit <checkpoint-dir> [--improve-iters N] [--eval-loops N]

Exit status is 0 on success, 1 for an invalid configuration and 2 for file
system errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .metrics import approximate_exploitability
from .plotting import emit_plots
from .runner import export_results, load_checkpoint, load_summary, run_trials

log = logging.getLogger("mfgmesh")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def _cmd_run(args) -> int:
    config = load_config(args.config)
    results = run_trials(config, args.workers)
    for r in results:
        final = r.rows[-1]
        log.info("trial %d (seed %d): final mean return %.4f", r.trial, r.seed, final.mean_return)
    summary = export_results(config, results, args.out, force=args.force)
    emit_plots(summary, args.out)
    print(args.out)
    return EXIT_OK


def _cmd_plot(args) -> int:
    summaries = [load_summary(d) for d in args.dirs]
    for path in emit_plots(summaries, args.out or args.dirs[0]):
        print(path)
    return EXIT_OK


def _cmd_exploit(args) -> int:
    pop = load_checkpoint(args.checkpoint)
    value = approximate_exploitability(pop, args.improve_iters, args.eval_loops)
    print(repr(value))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfgmesh", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train all trials and write CSV, JSON and SVG output")
    run.add_argument("config")
    run.add_argument("--out", required=True)
    run.add_argument("--force", action="store_true", help="reuse an existing output directory")
    run.add_argument("--workers", type=int, default=None)
    run.set_defaults(func=_cmd_run)

    plot = sub.add_parser("plot", help="render SVGs from one or more result directories")
    plot.add_argument("dirs", nargs="+")
    plot.add_argument("--out", default=None)
    plot.set_defaults(func=_cmd_plot)

    exploit = sub.add_parser("exploit", help="approximate exploitability of a checkpoint")
    exploit.add_argument("checkpoint")
    exploit.add_argument("--improve-iters", type=int, default=None)
    exploit.add_argument("--eval-loops", type=int, default=None)
    exploit.set_defaults(func=_cmd_exploit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
