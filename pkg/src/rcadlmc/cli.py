"""Command-line entry point: ``rcadlmc sweep|counterexample|validate``.

Exit codes: 0 success, 1 config error, 2 more than half the chains of some
cell diverged, 3 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import __version__
from .diagnostics import counterexample_check
from .harness import (
    ConfigError,
    admissibility,
    counterexample_csv,
    parse_config,
    run_sweep,
    sweep_csv,
)
from .samplers import SamplerKind

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3


def _threads(n: int) -> int:
    if n == 0:
        return os.cpu_count() or 1
    return n


def _int_list(text):
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _nonneg(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return value


class _Parser(argparse.ArgumentParser):
    # usage errors count as config errors; exit code 2 is reserved for divergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rcadlmc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rcadlmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_nonneg, default=None, help="master seed (overrides the config)")
    common.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    common.add_argument("--threads", type=_nonneg, default=None, help="worker threads, 0 = one per CPU (default: config value or 1)")

    p = sub.add_parser("sweep", parents=[common], help="run a step-size sweep from a config file")
    p.add_argument("config")
    p.add_argument("--exact-gradients", action="store_true", help="use exact partials instead of finite differences")
    p.add_argument("--no-timing", action="store_true", help="write wall_ms as nan so reruns are byte-identical")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("counterexample", parents=[common], help="excess second moment of RCD-U-LMC")
    p.add_argument("--d", type=_int_list, required=True, help="dimensions, e.g. 16,32,64")
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--n", type=_nonneg, default=0, help="chains per dimension (0 = oracle only)")
    p.add_argument("--m", type=_nonneg, required=True, help="number of steps")
    p.add_argument("--control", action="store_true", help="add a U-LMC row per dimension")

    p = sub.add_parser("validate", help="print the admissibility report of a config")
    p.add_argument("config")
    return parser


def _read_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def _write(text, out):
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc.strerror or exc}") from exc


def cmd_sweep(args) -> int:
    spec = _read_config(args.config)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.exact_gradients:
        spec = replace(spec, exact_gradients=True)
    if not args.quiet:
        for msg in spec.warnings:
            print(f"warning: {msg}", file=sys.stderr)

    def progress(row):
        if not args.quiet:
            status = "FAILED" if row.failed else f"error={row.error:.4g}"
            print(f"{row.sampler} h={row.h:g} M={row.M} {status}", file=sys.stderr)

    threads = spec.threads if args.threads is None else args.threads
    result = run_sweep(spec, threads=_threads(threads), progress=progress)
    _write(sweep_csv(result, timing=not args.no_timing), args.out or spec.out)
    return EXIT_DIVERGED if result.failed_cells else EXIT_OK


def cmd_counterexample(args) -> int:
    if not args.d or any(d < 1 for d in args.d):
        raise ConfigError("--d needs at least one positive dimension")
    if args.h <= 0:
        raise ConfigError("--h must be positive")
    seed = 0 if args.seed is None else args.seed
    kinds = [SamplerKind.RCD_U_LMC] + ([SamplerKind.U_LMC] if args.control else [])
    reports = [
        counterexample_check(d, args.h, args.m, args.n, seed=seed, kind=k, threads=_threads(args.threads or 1))
        for d in args.d
        for k in kinds
    ]
    comments = [f"rcadlmc {__version__}", f"counterexample: gamma = 1, h = {args.h!r}, M = {args.m}, N = {args.n}"]
    _write(counterexample_csv(reports, comments), args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    spec = _read_config(args.config)
    ok = True
    for kind, h, rep in admissibility(spec):
        print(f"{kind} h={h!r} eta={spec.kernel_params(kind, h).eta!r}")
        for line in rep.lines():
            print(f"  {line}")
        ok = ok and rep.passed
    print("admissible" if ok else "not admissible (see above)")
    return EXIT_OK


COMMANDS = {"sweep": cmd_sweep, "counterexample": cmd_counterexample, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
