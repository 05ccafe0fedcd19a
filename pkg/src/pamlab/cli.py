"""Command line interface: ``pamlab <command> [options]``.

Commands
--------
variational  variational constant and its scaling in lambda
fk           Feynman-Kac moment estimates
simulate     chaos-expansion moments (exact second moment and sampled L^p)
hyper        hypercontractive moment comparison
report       full pipeline: one CSV and one text summary
rates        closed-form rate calculators

Options may come from a ``key = value`` file given with ``--config``;
command line flags override it.  Exit codes: 0 success, 2 configuration
error, 3 engine failure, 4 resource cap refusal.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import COMMANDS, ConfigError, load_config
from .model import EngineError, ResourceCapError
from .report import emit_plotdata, maximizer_csv, run
from .streams import WORKERS_ENV, default_workers

EXIT_CONFIG, EXIT_ENGINE, EXIT_CAP = 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # one machine-parsable line instead of usage text
        self.exit(EXIT_CONFIG, f"error: config: {message}\n")


# (flag, config key, help)
_COMMON = [
    ("--alpha0", "alpha0", "temporal exponent in (0, 1)"),
    ("--alpha", "alpha", "spatial homogeneity degree in (0, 2)"),
    ("--d", "d", "spatial dimension"),
    ("--lambda", "lam", "noise intensity"),
    ("--kernel", "kernel", "spatial kernel: riesz or delta"),
    ("--seed", "seed", "random seed"),
]
_FLAGS = {
    "variational": [
        ("--M", "var_M", "time slices"), ("--N", "var_N", "spatial cells per axis"),
        ("--L", "var_L", "box half-width (0 = automatic)"), ("--step", "step", "ascent step"),
        ("--tol", "tol", "relative improvement tolerance"),
        ("--max-iter", "max_iter", "iteration cap"),
        ("--lambdas", "lambdas", "comma-separated intensities"),
    ],
    "fk": [
        ("--n", "n", "comma-separated integer moment orders"),
        ("--t", "t", "comma-separated horizons"),
        ("--samples", "samples", "Monte Carlo samples"), ("--steps", "steps", "time steps"),
    ],
    "simulate": [
        ("--t", "t", "comma-separated horizons"), ("--M", "chaos_M", "time cells"),
        ("--N", "chaos_N", "spatial cells per axis"), ("--L", "chaos_L", "box half-width"),
        ("--grading", "grading", "time grid grading exponent (1 = uniform)"),
        ("--K", "K", "chaos truncation level"),
        ("--samples", "chaos_samples", "noise samples"),
        ("--p", "p", "comma-separated real moment orders"),
    ],
    "hyper": [
        ("--t", "t", "comma-separated horizons"),
        ("--lambdas", "lambdas", "comma-separated intensities"),
        ("--pairs", "pairs", "comma-separated p:q pairs"),
        ("--M", "chaos_M", "time cells"), ("--N", "chaos_N", "spatial cells per axis"),
        ("--L", "chaos_L", "box half-width"), ("--grading", "grading", "time grid grading"),
        ("--K", "K", "chaos truncation level"), ("--samples", "chaos_samples", "noise samples"),
    ],
    "rates": [
        ("--n", "n", "comma-separated integer orders for the white-noise rate"),
        ("--pairs", "pairs", "comma-separated p:q pairs"),
    ],
}
_FLAGS["report"] = (
    [f for f in _FLAGS["variational"] if f[1] not in ("lambdas",)]
    + [("--lambdas", "lambdas", "comma-separated intensities"),
       ("--t", "t", "comma-separated horizons"), ("--n", "n", "FK integer orders"),
       ("--fk-samples", "samples", "FK samples"), ("--fk-steps", "steps", "FK time steps"),
       ("--chaos-M", "chaos_M", "chaos time cells"),
       ("--chaos-N", "chaos_N", "chaos spatial cells"),
       ("--chaos-L", "chaos_L", "chaos box half-width"),
       ("--grading", "grading", "chaos time grid grading"), ("--K", "K", "chaos truncation"),
       ("--chaos-samples", "chaos_samples", "chaos noise samples"),
       ("--p", "p", "real moment orders"), ("--pairs", "pairs", "p:q pairs")]
)


def build_parser():
    parser = _Parser(prog="pamlab", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker threads (default from {WORKERS_ENV}, else 1)")
        for flag, key, text in _COMMON + _FLAGS[cmd]:
            p.add_argument(flag, dest=key, default=None, help=text)
        if cmd == "report":
            p.add_argument("--out-dir", required=True, help="directory for the outputs")
        else:
            p.add_argument("-o", "--output", default=None, help="CSV path (default stdout)")
        if cmd == "variational":
            p.add_argument("--grid-out", default=None,
                           help="write the lambda = 1 maximizer as a flat CSV")
    return parser


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    keys = {key for flag, key, _ in _COMMON + _FLAGS[args.command]}
    overrides = {k: getattr(args, k) for k in keys}
    overrides["workers"] = args.workers if args.workers is not None else default_workers()
    try:
        cfg = load_config(args.config, overrides, args.command)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rep = run(cfg)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceCapError as exc:
        print(f"error: resource-cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (EngineError, FloatingPointError) as exc:
        print(f"error: engine: {exc}", file=sys.stderr)
        return EXIT_ENGINE

    csv_text = rep.to_csv(cfg)
    if args.command == "report":
        os.makedirs(args.out_dir, exist_ok=True)
        _write(os.path.join(args.out_dir, "report.csv"), csv_text)
        _write(os.path.join(args.out_dir, "summary.txt"), rep.summary_text(cfg))
        _write(os.path.join(args.out_dir, "plotdata.csv"), emit_plotdata(rep))
        print("\n".join(rep.summary))
    elif args.output:
        _write(args.output, csv_text)
        print("\n".join(rep.summary))
    else:
        sys.stdout.write(csv_text)
    if args.command == "variational" and args.grid_out:
        _write(args.grid_out, maximizer_csv(rep.maximizers[1.0]))
    failed = any(str(v).startswith("error:") for row in rep.rows for v in row)
    return EXIT_ENGINE if failed else 0


if __name__ == "__main__":
    sys.exit(main())
