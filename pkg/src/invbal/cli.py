"""Command-line entry point: ``invbal <subcommand> --config FILE [overrides]``.

Exit codes: 0 success, 1 other runtime failure, 2 configuration error, 3 audit
failure, 4 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, InvbalError, MalformedInstanceError, SolverError
from .experiments import ExperimentAborted, ExperimentConfig, load_config, run_experiment

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_AUDIT, EXIT_SOLVER = 0, 1, 2, 3, 4

SUBCOMMAND_KIND = {
    "simulate": "matching",
    "lowerbound": "lowerbound",
    "hotel": "hotel",
    "audit": "audit",
    "regret-scaling": "regret-scaling",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="invbal", description="Inventory-balancing simulations, benchmarks and audits.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, kind in SUBCOMMAND_KIND.items():
        p = sub.add_parser(name, help=f"run a {kind} experiment from a JSON config")
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--seed", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out-dir", dest="out_dir")
    p = sub.add_parser("lp-export", help="write the fluid LP of an instance in CPLEX LP format")
    p.add_argument("--instance", required=True, help="instance JSON file")
    p.add_argument("--output", "-o", help="output path (default: stdout)")
    p.add_argument("--per-period", action="store_true", help="one period row per customer instead of per context")
    return parser


def _lp_export(args) -> int:
    from .benchmark import build_primal_lp, to_lp_format
    from .model import load_instance

    try:
        instance = load_instance(args.instance)
    except OSError as e:
        raise ConfigError(f"cannot read instance {args.instance}: {e}") from None
    text = to_lp_format(build_primal_lp(instance, aggregate=not args.per_period), name=args.instance)
    if args.output:
        with open(args.output, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _experiment(args) -> int:
    cfg = load_config(args.config)
    kind = SUBCOMMAND_KIND[args.command]
    if cfg.kind != kind:
        raise ConfigError(f"subcommand {args.command!r} expects a {kind!r} config, got {cfg.kind!r}")
    cfg = cfg.with_overrides(seed=args.seed, replicates=args.replicates, workers=args.workers, out_dir=args.out_dir)
    report = run_experiment(cfg)
    print(report.format_table())
    if cfg.kind == "regret-scaling":
        print(f"log-log slope: {report.meta['slope']:.4f}")
    if cfg.out_dir:
        print(f"wrote {cfg.out_dir}/{cfg.name}.csv and .json")
    if cfg.kind == "audit" and not report.rows[0]["passed"]:
        print("audit FAILED", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "lp-export":
            return _lp_export(args)
        return _experiment(args)
    except SolverError as e:
        print(f"solver failure: {e} {e.diagnostics}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, MalformedInstanceError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentAborted as e:
        print(f"experiment aborted: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except InvbalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
