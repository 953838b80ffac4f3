"""Command-line entry point: ``loopbench run|report|validate-env|enumerate``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from ..constraints import TooLarge, iter_satisfying_orders
from .config import VARIANTS, AgentSpec, ConfigError, ExperimentConfig
from .envspec import EnvSpecError, load_env_spec
from .report import EmptyResults, generate_report
from .runner import run_experiment


def _config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes: dict = {}
    if args.agent:
        known = {a.name: a for a in cfg.agents}
        picked = []
        for name in args.agent:
            if name in known:
                picked.append(known[name])
            elif name == "oracle":
                picked.append(AgentSpec("oracle", "oracle"))
            else:
                raise ConfigError(f"agent {name!r} is not defined in the config")
        changes["agents"] = tuple(picked)
    if args.variant:
        changes["variants"] = tuple(args.variant)
    if args.env:
        changes["envs"] = tuple(args.env)
    for flag, key in (("seed", "base_seed"), ("parallelism", "parallelism"), ("n_trials", "n_trials"), ("out", "out")):
        value = getattr(args, flag)
        if value is not None:
            changes[key] = value
    return dataclasses.replace(cfg, **changes)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args)
    out = run_experiment(cfg)
    print(out)
    if not args.no_report:
        print(generate_report(out))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    print(generate_report(args.results, args.out))
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    env = load_env_spec(args.path)
    print(f"{env.name}: ok, {env.k} objects, {len(env.constraints)} constraints")
    return 0


def cmd_enumerate(args: argparse.Namespace) -> int:
    env = load_env_spec(args.path)
    count = 0
    for order in iter_satisfying_orders(env.constraints, list(env.roster), env.goal.required):
        count += 1
        if args.show:
            print(" ".join(order))
    print(count)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loopbench", description="Closed-loop symbolic planner evaluation harness.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment grid and write records.jsonl")
    run.add_argument("--config", help="experiment config JSON (defaults: bundled envs, oracle, all variants)")
    run.add_argument("--out", help="results directory")
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--parallelism", type=int, help="worker count")
    run.add_argument("--agent", action="append", help="restrict to this agent name (repeatable)")
    run.add_argument("--variant", action="append", choices=VARIANTS, help="restrict to this variant (repeatable)")
    run.add_argument("--env", action="append", help="environment spec path or bundled name (repeatable)")
    run.add_argument("--n-trials", type=int, dest="n_trials")
    run.add_argument("--no-report", action="store_true", help="skip report generation")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="build CSV tables from a results directory")
    rep.add_argument("results")
    rep.add_argument("--out", help="report directory (default: <results>/report)")
    rep.set_defaults(func=cmd_report)

    val = sub.add_parser("validate-env", help="parse and check an environment spec")
    val.add_argument("path")
    val.set_defaults(func=cmd_validate)

    enum = sub.add_parser("enumerate", help="count placement orders satisfying every constraint")
    enum.add_argument("path")
    enum.add_argument("--show", action="store_true", help="also print each order")
    enum.set_defaults(func=cmd_enumerate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, EnvSpecError, EmptyResults, TooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
