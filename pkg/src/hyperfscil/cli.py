"""Command line entry point: ``hyperfscil {run,sweep,gen-data,gradcheck}``.

Exit codes: 0 success, 2 config error, 3 dataset error, 4 numerical error,
5 protocol violation.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import SWEEPABLE, parse_config
from .data import generate_synthetic, write_csv_dataset
from .errors import (
    ConfigError,
    DatasetError,
    InvalidInputError,
    NumericalError,
    ProtocolError,
)
from .experiment import emit_results, run_experiment, run_sweep, write_sweep
from .gradcheck import run_gradient_suite

EXIT_CODES = (
    (ConfigError, 2),
    (DatasetError, 3),
    (NumericalError, 4),
    (InvalidInputError, 4),
    (ProtocolError, 5),
)


def _cmd_run(args):
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    out = args.out or cfg.output_dir
    report = run_experiment(cfg)
    csv_path, json_path = emit_results(report, cfg, out)
    print(f"PD {report.performance_drop:.2f}  average {report.average_accuracy:.2f}  "
          f"final {report.final_accuracy:.2f}")
    print(f"wrote {csv_path} and {json_path}")


def _cmd_sweep(args):
    cfg = parse_config(args.config)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values: cannot parse {args.values!r}") from None
    if not values:
        raise ConfigError("--values: empty list")
    rows = run_sweep(cfg, args.param, values)
    path = write_sweep(rows, args.out or os.path.join(cfg.output_dir, f"sweep_{args.param}.csv"))
    for value, final, pd, avg in rows:
        print(f"{args.param}={value:g}  final {final:.2f}  PD {pd:.2f}  average {avg:.2f}")
    print(f"wrote {path}")


def _cmd_gen_data(args):
    ds = generate_synthetic(args.classes, args.train, args.test, args.dim, args.sep, args.seed)
    write_csv_dataset(ds, args.out)
    print(f"wrote {len(ds.y)} samples to {args.out}")


def _cmd_gradcheck(args):
    seeds = range(args.seed, args.seed + args.fixtures)
    worst = run_gradient_suite(seeds, tolerance=args.tolerance)
    failed = False
    for name, err in worst.items():
        ok = err <= args.tolerance
        failed |= not ok
        print(f"{name:<22} max rel error {err:.3e}  {'ok' if ok else 'FAIL'}")
    return 4 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="hyperfscil", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train and evaluate one configuration")
    run.add_argument("--config", required=True)
    run.add_argument("--out")
    run.add_argument("--seed", type=int)
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="repeat a run over values of one parameter")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--param", required=True, choices=SWEEPABLE)
    sweep.add_argument("--values", required=True, help="comma-separated list")
    sweep.add_argument("--out", help="sweep CSV path")
    sweep.set_defaults(func=_cmd_sweep)

    gen = sub.add_parser("gen-data", help="write a synthetic Gaussian-blob dataset as CSV")
    gen.add_argument("--classes", type=int, required=True)
    gen.add_argument("--train", type=int, required=True)
    gen.add_argument("--test", type=int, required=True)
    gen.add_argument("--dim", type=int, required=True)
    gen.add_argument("--sep", type=float, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_gen_data)

    grad = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    grad.add_argument("--seed", type=int, default=0)
    grad.add_argument("--fixtures", type=int, default=20)
    grad.add_argument("--tolerance", type=float, default=1e-4)
    grad.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        # overflow surfaces as NumericalError from the graph, not as warnings
        with np.errstate(over="ignore", invalid="ignore"):
            return args.func(args) or 0
    except tuple(cls for cls, _ in EXIT_CODES) as exc:
        code = next(c for cls, c in EXIT_CODES if isinstance(exc, cls))
        print(f"error: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3 if args.command == "gen-data" else 2


if __name__ == "__main__":
    sys.exit(main())
