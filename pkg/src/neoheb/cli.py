"""``neoheb-sim`` command line.

Errors are reported on stderr as one JSON object
``{"error": <type>, "message": <text>}``; exit code 2 for bad usage or
configuration, 1 for failures while running.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import harness as hx

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class CliError(Exception):
    def __init__(self, kind, message, code):
        super().__init__(message)
        self.kind, self.code = kind, code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("UsageError", message, EXIT_CONFIG)


def _u64(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    p = _Parser(prog="neoheb-sim", description="Thermal neoHebbian synapse simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI experiment file (defaults when omitted)")
    common.add_argument("--seed", type=_u64, help="master seed; overrides [experiment] seed")
    common.add_argument("--out", default="-", help="output path ('-' = stdout)")
    common.add_argument("--workers", type=_positive, default=1, help="parallel worker processes")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config key (repeatable)")
    sub.add_parser("train-maze", parents=[common], help="maze runs for a single configuration")
    sub.add_parser("train-seq", parents=[common], help="sequence-task runs for a single configuration")
    sub.add_parser("sweep", parents=[common], help="full sweep grid from the config")
    cs = sub.add_parser("cellsim", parents=[common], help="thermal coupling coefficients of the voxel model")
    cs.add_argument("--dump", metavar="STEM", help="also write STEM.bin/STEM.json field dumps")
    pd = sub.add_parser("print-defaults", help="print a config file holding every default")
    pd.add_argument("--task", choices=hx.TASKS, default="maze")
    pd.add_argument("--out", default="-")
    return p


def _load(args, check=True):
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"experiment.seed={args.seed}")
    if args.config:
        return hx.load_config(args.config, overrides, check)
    return hx.parse_config("", overrides, check)


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError("IOError", f"cannot write {path}: {exc}", EXIT_RUNTIME) from None


def _experiment(args, task=None):
    cfg = _load(args, check=task is None)
    if task is not None:
        cfg = replace(cfg, task=task, sweep=[])
        hx.validate(cfg)
    records = hx.run_experiment(cfg, workers=args.workers)
    if args.format == "csv":
        text = hx.report_csv(hx.aggregate(records))
    else:
        text = hx.emit_report(records, "json", None, cfg)
    _write(text, args.out)
    return 0


def _cellsim(args):
    cfg = _load(args, check=False)
    results = []
    cells = hx.cellsim_cells(cfg)
    for i, (cell, values) in enumerate(cells):
        dump = None
        if args.dump:
            dump = args.dump if len(cells) == 1 else f"{args.dump}_{i}"
        res, spec = hx.run_cellsim(values, dump=dump)
        results.append((cell, res, spec))
    if args.format == "csv":
        text = hx.cellsim_csv(results)
    else:
        text = json.dumps([{"cell": [list(c) for c in cell], "K": spec.K, "F": spec.F,
                            "variant": spec.variant,
                            "rows": [list(r) for r in res.rows(spec.K)]}
                           for cell, res, spec in results], indent=2) + "\n"
    _write(text, args.out)
    return 0


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command == "print-defaults":
            _write(hx.default_config(args.task).to_ini(), args.out)
            return 0
        if args.command == "train-maze":
            return _experiment(args, "maze")
        if args.command == "train-seq":
            return _experiment(args, "seq")
        if args.command == "sweep":
            return _experiment(args)
        return _cellsim(args)
    except CliError as exc:
        err, code = {"error": exc.kind, "message": str(exc)}, exc.code
    except hx.ConfigError as exc:
        err, code = {"error": "ConfigError", "message": str(exc)}, EXIT_CONFIG
    except Exception as exc:
        err, code = {"error": type(exc).__name__, "message": str(exc)}, EXIT_RUNTIME
    sys.stderr.write(json.dumps(err) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
