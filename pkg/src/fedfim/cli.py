"""Command-line entry point.

  fedfim run <config.cfg> [--set key=value ...] [-o DIR]
  fedfim validate <config.cfg> [--set key=value ...]
  fedfim compare <table.cfg> [-o DIR]

Exit codes: 0 success, 2 configuration error, 3 numeric abort, 4 I/O or
data-file error.  FEDFIM_OUTPUT_DIR overrides the configured output root.
"""

from __future__ import annotations

import argparse
import sys

from .config import parse_config
from .errors import ConfigError, DataConsistencyError, DataFormatError, NumericError
from .harness import compare, format_table, parse_compare_spec, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedfim",
        description="Deterministic federated-learning simulator with an exact communication ledger.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment and write metrics")
    p_run.add_argument("config", help="path to a config file")
    p_run.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key (repeatable)")
    p_run.add_argument("-o", "--output-dir", default=None, help="metrics root override")

    p_val = sub.add_parser("validate", help="parse and validate a config, print the effective dump")
    p_val.add_argument("config")
    p_val.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    p_cmp = sub.add_parser("compare", help="run a comparison table spec")
    p_cmp.add_argument("spec", help="table spec: 'base <cfg>' plus 'row <label> key=value ...' lines")
    p_cmp.add_argument("-o", "--output-dir", default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = parse_config(args.config, args.overrides)
            sys.stdout.write(cfg.dump())
            return EXIT_OK
        if args.command == "run":
            cfg = parse_config(args.config, args.overrides)
            result = run(cfg, output_dir=args.output_dir)
            s = result.summary
            conv = s["convergence_round"] if s["convergence_round"] is not None else "-"
            print(
                f"run {s['run_id']}: rounds={s['rounds_run']} "
                f"final_accuracy={s['final_accuracy']:.4f} convergence_round={conv} "
                f"comm_scalars={s['total_comm_scalars']} ({s['wall_seconds']}s) -> {result.run_dir}"
            )
            return EXIT_OK
        if args.command == "compare":
            base, rows = parse_compare_spec(args.spec)
            table = compare(base, rows, output_dir=args.output_dir)
            print(format_table(table))
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, DataFormatError, DataConsistencyError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
