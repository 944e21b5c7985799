"""Command-line entry point.

Global flags (config file, seed, detector thresholds, solver settings)
apply to every subcommand; precedence is defaults < config file <
BLOCKFORGE_* environment < flags.
"""
from __future__ import annotations

import argparse
import sys

from .benchgen import FAMILIES
from .pipeline import (
    ConfigError,
    cmd_buildlib,
    cmd_decompose,
    cmd_feascheck,
    cmd_genbench,
    cmd_generate,
    cmd_harden,
    cmd_stats,
    cmd_visualize,
    load_config,
)

_CONFIG_FLAGS = (
    "seed", "eta", "jobs", "out", "zeta",
    "phi1", "phi2", "phi3", "phi4", "phi5",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockforge",
        description="Block-structured MILP instance analysis and generation.")
    parser.add_argument("--config", help="TOML configuration file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--eta", type=float, help="modification ratio in (0, 1]")
    parser.add_argument("--op", choices=("reduce", "mixup", "expand",
                                         "balanced-thirds"))
    parser.add_argument("--jobs", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--solver-cmd",
                        help="command template with {input} and {timelimit}")
    parser.add_argument("--time-limit", type=float)
    parser.add_argument("--zeta", type=int, help="line-end run length")
    for k in range(1, 6):
        parser.add_argument(f"--phi{k}", type=float)
    parser.add_argument("--detect-db", action="store_true", default=None,
                        help="classify bordered variables and DB constraints")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("genbench", help="emit a planted-structure corpus")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--k", type=int, required=True, help="units per instance")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--width", type=int, help="unit width (5, 9, 13, ...)")
    p.add_argument("--masters", type=int)
    p.add_argument("--borders", type=int)

    p = sub.add_parser("decompose", help="write block partitions for MPS files")
    p.add_argument("inputs", nargs="+")

    p = sub.add_parser("buildlib", help="decompose inputs and build a library")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--lib-name", default="library.json.gz")

    p = sub.add_parser("generate", help="generate instances via the operators")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--lib", required=True)
    p.add_argument("--count", type=int, required=True)

    p = sub.add_parser("stats", help="similarity report between two corpora")
    p.add_argument("--corpus-a", nargs="+", required=True)
    p.add_argument("--corpus-b", nargs="+", required=True)

    p = sub.add_parser("visualize", help="write PGM/PPM images of the CCM")
    p.add_argument("inputs", nargs="+")

    p = sub.add_parser("feascheck", help="run the brute-force oracle")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--budget", type=int)

    p = sub.add_parser("harden", help="iterate the hard-instance pool")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--lib", required=True)
    p.add_argument("--iterations", type=int, default=10)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {name: getattr(args, name) for name in _CONFIG_FLAGS}
    overrides["operator"] = args.op
    overrides["solver_cmd"] = args.solver_cmd
    overrides["time_limit"] = args.time_limit
    overrides["detect_db"] = args.detect_db
    if args.command == "feascheck" and args.budget is not None:
        overrides["oracle_budget"] = args.budget
    try:
        cfg = load_config(path=args.config, overrides=overrides)
        if args.command == "genbench":
            return cmd_genbench(cfg, args.family, args.k, args.count,
                                width=args.width, masters=args.masters,
                                borders=args.borders)
        if args.command == "decompose":
            return cmd_decompose(cfg, args.inputs)
        if args.command == "buildlib":
            return cmd_buildlib(cfg, args.inputs, lib_name=args.lib_name)
        if args.command == "generate":
            return cmd_generate(cfg, args.inputs, args.lib, args.count)
        if args.command == "stats":
            return cmd_stats(cfg, args.corpus_a, args.corpus_b)
        if args.command == "visualize":
            return cmd_visualize(cfg, args.inputs)
        if args.command == "feascheck":
            return cmd_feascheck(cfg, args.inputs)
        if args.command == "harden":
            return cmd_harden(cfg, args.inputs, args.lib, args.iterations)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"blockforge {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
