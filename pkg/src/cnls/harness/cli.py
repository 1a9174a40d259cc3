"""Command line front door: ``cnls {run,sweep,bisect,instability,threshold,verify} CONFIG``.

Exit codes: 0 success, 1 validation error, 2 numerical failure
(inconclusive or aborted), 3 I/O error.
"""
import argparse
import sys
import warnings

from ..errors import (CNLSError, ConfigError, ContractError, EvaluationError, ParameterError,
                      ResolutionError)
from .config import apply_overrides, load_config
from .experiments import OK, ExperimentAborted, run_experiment
from .output import OutputError, emit_outputs

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

SUBCOMMANDS = {
    "run": "single-run",
    "sweep": "amplitude-sweep",
    "bisect": "threshold-bisect",
    "instability": "instability",
    "threshold": "threshold-estimate",
    "verify": "identity-suite",
}
_VALIDATION = (ConfigError, ParameterError, ContractError, EvaluationError, ResolutionError)


def build_parser():
    parser = argparse.ArgumentParser(prog="cnls", description="Coupled NLS experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run a {kind} experiment")
        p.add_argument("config", help="YAML experiment configuration")
        p.add_argument("--p", type=float, help="nonlinearity exponent")
        p.add_argument("--c", type=float, help="amplitude multiplier (single amplitude)")
        p.add_argument("--k", type=float, help="ground-state multiplier (single k)")
        p.add_argument("--t-max", dest="t_max", type=float, help="time horizon")
        p.add_argument("--resolution", type=int, help="grid points (per axis)")
        p.add_argument("--output", help="output directory (overrides the config)")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return parser


def _report(result, out_dir, quiet):
    if quiet:
        return
    s = result.summary
    print(f"{result.experiment}: status={result.status} runs={len(result.runs)} -> {out_dir}")
    for run in result.runs:
        print(f"  {run.label}: {run.record.classification}")
    if "warning" in s and s["warning"]:
        print(f"  WARNING: {s['warning']}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        expected = SUBCOMMANDS[args.command]
        if cfg.experiment != expected:
            raise ConfigError(f"'{args.command}' runs {expected} experiments, the config declares "
                              f"{cfg.experiment}")
        cfg = apply_overrides(cfg, p=args.p, c=args.c, k=args.k, t_max=args.t_max,
                              resolution=args.resolution)
        if args.output:
            cfg = cfg.with_(output_dir=args.output)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except _VALIDATION as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            result = run_experiment(cfg)
    except ExperimentAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        if exc.result is not None:
            try:
                emit_outputs(exc.result.runs, exc.result.summary, cfg.output_dir)
            except OutputError as oexc:
                print(f"error: {oexc}", file=sys.stderr)
                return EXIT_IO
        return EXIT_NUMERICAL
    except _VALIDATION as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CNLSError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    try:
        emit_outputs(result.runs, result.summary, cfg.output_dir)
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    _report(result, cfg.output_dir, args.quiet)
    return EXIT_OK if result.status == OK else EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
