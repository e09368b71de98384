"""Command-line front end: ``coherent-hartree <subcommand> ...``.

Exit codes: 0 when every check passes, 1 on a tolerance failure, 2 on a usage
or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import experiments as ex
from .amplitudes import AMPLITUDE_CATALOG
from .potentials import KERNEL_CATALOG, POTENTIAL_CATALOG

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SHORTCUTS = {"converge": "converge", "conserve": "conserve", "rectangle": "rectangle-decay",
             "corrector": "corrector", "wigner": "wigner", "moving-frame": "moving-frame"}


def _regime(text: str) -> str:
    """Map an --alpha value (1, 0.5, 0 or 'linear') to a regime name."""
    if text.lower() in ("linear", "none"):
        return "linear"
    try:
        value = float(text)
    except ValueError:
        value = None
    for name, alpha in ex.REGIME_ALPHA.items():
        if alpha is not None and alpha == value:
            return name
    raise argparse.ArgumentTypeError(f"expected 1, 0.5, 0 or 'linear', got {text!r}")


def _add_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--eps", type=float, nargs="+", help="eps values (replaces the configured sweep)")
    parser.add_argument("--alpha", dest="regime", type=_regime, help="nonlinearity exponent: 1, 0.5, 0 or 'linear'")
    parser.add_argument("--out", help="output directory for summary.json and the other artifacts")
    parser.add_argument("--jobs", type=int, help="parallel eps points")
    parser.add_argument("--dt-factor", type=float, help="PDE time step as a multiple of eps")
    parser.add_argument("--quiet", action="store_true", help="print only the verdict line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coherent-hartree",
                                     description="Coherent-state approximations of semiclassical Hartree dynamics.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a TOML or JSON file")
    run.add_argument("config")
    _add_overrides(run)
    for name, kind in SHORTCUTS.items():
        p = sub.add_parser(name, help=f"run the default {kind} experiment (or --config FILE)")
        p.add_argument("--config", help="start from this file instead of the built-in default")
        if kind == "rectangle-decay":
            p.add_argument("--branch", choices=("momentum", "position"), default="momentum")
        _add_overrides(p)
    val = sub.add_parser("validate-config", help="check a configuration file without running it")
    val.add_argument("config")
    sub.add_parser("list-catalog", help="list potentials, kernels and amplitude profiles")
    return parser


def _print_record(record: ex.ExperimentRecord, quiet: bool) -> None:
    if not quiet:
        for row in record.rows:
            print("  " + ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                                   for k, v in row.items()))
        for failure in record.failures:
            print(f"  eps={failure['eps']:.6g} failed: {failure['error']}")
        for check in record.checks:
            print(f"  [{'PASS' if check.passed else 'FAIL'}] {check.name}: {check.detail}")
    print(f"{record.kind} ({record.regime}): {'PASS' if record.passed else 'FAIL'}")


def _list_catalog() -> None:
    for title, catalog in (("potentials", POTENTIAL_CATALOG), ("kernels", KERNEL_CATALOG),
                           ("amplitudes", AMPLITUDE_CATALOG)):
        print(f"{title}:")
        for name, (cls, params) in catalog.items():
            keys = ", ".join(params) or "(no parameters)"
            print(f"  {name:18s} {cls.__name__:22s} {keys}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    if args.command == "list-catalog":
        _list_catalog()
        return EXIT_PASS
    try:
        if args.command == "validate-config":
            config = ex.load_config(args.config)
            print(f"{args.config}: valid {config.kind} experiment (regime {config.regime}, "
                  f"{len(config.eps)} eps values, hash {config.config_hash()[:12]})")
            return EXIT_PASS
        if args.command == "run":
            config = ex.load_config(args.config)
        elif args.config:
            config = ex.load_config(args.config)
        elif args.command == "rectangle":
            config = ex.rectangle_config(args.branch)
        else:
            config = ex.default_config(SHORTCUTS[args.command], args.regime)
        config = ex.apply_overrides(config, eps=args.eps, regime=args.regime, out=args.out, jobs=args.jobs,
                                    dt_factor=args.dt_factor)
        record = ex.run_experiment(config)
    except ex.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _print_record(record, args.quiet)
    if config.out:
        print(f"artifacts written to {config.out}")
    elif not args.quiet:
        print(json.dumps({"passed": record.passed, "fits": record.fits}, indent=1, default=float))
    return EXIT_PASS if record.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
