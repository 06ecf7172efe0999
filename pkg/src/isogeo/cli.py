"""Command line entry point: ``isogeo <experiment> [options]`` and ``isogeo report DIR``."""

from __future__ import annotations

import argparse
import sys

from . import parallel
from .errors import ConfigurationError, InsufficientSamplesError, ResolutionError, UsageError
from .experiments import EXPERIMENTS, emit_report, load_config, run

EXIT_PASS, EXIT_ASSERTION, EXIT_USAGE = 0, 1, 2


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _key_value(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        parsed = float(value) if any(c in value for c in ".eE") else int(value)
    except ValueError:
        parsed = value
    return key.strip(), parsed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isogeo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="YAML config file (flags override its values)")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--threads", type=int, help="worker count (default: $ISOGEO_THREADS or 1)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--body", help="body kind: cube, ball, cross_polytope, simplex, lp_ball")
        p.add_argument("--dim", type=int, help="dimension n")
        p.add_argument("--p", type=float, help="exponent for lp_ball")
        p.add_argument("--grid", help="comma list: N values (mean-width), s/L_K levels "
                                      "(orlicz-verify) or t values (others)")
        p.add_argument("--samples", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--directions", type=int)
        p.add_argument("--M", type=int, help="directions per mean-width evaluation")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--r", type=float)
        p.add_argument("--t-max", type=float)
        p.add_argument("--sampler", choices=["direct", "hit_and_run"])
        p.add_argument("--set", action="append", type=_key_value, default=[], metavar="NAME=VALUE",
                       help="override any threshold (repeatable)")

    rp = sub.add_parser("report", help="summarize a finished run directory")
    rp.add_argument("run_dir")
    return parser


def _overrides(args) -> dict:
    body = {"kind": args.body, "n": args.dim, "p": args.p}
    budgets = {"samples": args.samples, "trials": args.trials, "directions": args.directions, "M": args.M}
    thresholds = {"epsilon": args.epsilon, "r": args.r, "t_max": args.t_max, "sampler": args.sampler}
    thresholds.update(dict(args.set))
    grids = {}
    if args.grid:
        if args.command == "mean-width":
            grids["N_grid"] = _int_list(args.grid)
        elif args.command == "orlicz-verify":
            grids["s_levels"] = _float_list(args.grid)
        else:
            grids["t_grid"] = _float_list(args.grid)
    return {"body": body, "seed": args.seed, "budgets": budgets, "grids": grids,
            "thresholds": thresholds, "output_dir": args.out}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "report":
        try:
            print(emit_report(args.run_dir))
        except ConfigurationError as exc:
            print(f"isogeo: {exc}", file=sys.stderr)
            return EXIT_USAGE
        return EXIT_PASS

    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        cfg = load_config(args.command, args.config, _overrides(args))
        with parallel.workers(args.threads):
            status, out = run(cfg)
    except (ConfigurationError, UsageError) as exc:
        print(f"isogeo: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InsufficientSamplesError, ResolutionError) as exc:
        print(f"isogeo: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    print(emit_report(out))
    return status


if __name__ == "__main__":
    sys.exit(main())
