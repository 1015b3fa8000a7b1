"""Command-line front end.

Subcommands: frozen-opt, mobile-sim, ideal-sim, sweep, compare, oracle.
Exit codes: 2 bad configuration/input, 3 numeric failure, 4 non-convergence.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, NonConvergenceError, NumericalError, PfsaFormatError
from .pfsa import load_pfsa
from .scenarios import compare, load_scenario, run, sweep, write_json
from .supervisor import brute_force_optimal

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_NONCONVERGENCE = 4


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="scenario JSON file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmroute",
        description="Frozen-swarm route optimization and mobile-swarm simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("frozen-opt", "distributed route optimization on the initial frozen swarm"),
        ("mobile-sim", "movement interleaved with per-tick measure epochs"),
        ("ideal-sim", "movement with fully re-converged routes every tick"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)

    p = sub.add_parser("sweep", help="repeat runs along one parameter axis")
    _add_common(p)
    p.add_argument("--axis", required=True, choices=["n_agents", "epsilon", "v_s", "r_c"])
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--reps", type=int, default=10, help="seeded repetitions per value")

    p = sub.add_parser("compare", help="cross-check solvers on a serialized network PFSA")
    p.add_argument("pfsa", help="role-annotated PFSA text file")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("oracle", help="brute-force optimum of a serialized PFSA")
    p.add_argument("pfsa", help="PFSA text file")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--out", default=None)
    return parser


_MODE_BY_COMMAND = {"frozen-opt": "frozen", "mobile-sim": "real", "ideal-sim": "ideal"}


def _dispatch(args) -> int:
    if args.command in _MODE_BY_COMMAND:
        config = load_scenario(args.config)
        config = replace(config, mode=_MODE_BY_COMMAND[args.command])
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        summary = run(config, out_dir=args.out)
        print(json.dumps(summary, indent=2, sort_keys=True))
        return 0
    if args.command == "sweep":
        config = load_scenario(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        try:
            values = [float(v) for v in args.values.split(",") if v]
        except ValueError as exc:
            raise ConfigError(f"bad --values list: {exc}") from exc
        report = sweep(config, args.axis, values, reps=args.reps, out_dir=args.out)
        print(json.dumps(report["aggregate"], indent=2, sort_keys=True))
        return 0
    if args.command == "compare":
        report = compare(args.pfsa, args.theta, args.epsilon)
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "compare.json", report)
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0
    if args.command == "oracle":
        pfsa, _ = load_pfsa(args.pfsa)
        result = brute_force_optimal(pfsa, args.theta)
        report = {
            "theta": result.theta_used,
            "policy": sorted(list(p) for p in result.policy),
            "policy_size": len(result.policy),
            "measure": [float(v) for v in result.measure.values],
            "candidates_examined": result.iterations,
        }
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "oracle.json", report)
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0
    raise ConfigError(f"unknown command {args.command}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, PfsaFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
