"""Command-line interface.

Exit codes: 0 success, 1 a reproduction claim failed, 2 input or config error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .environments import resolve_environment
from .formatting import fmt, fmt_vec
from .learners import ConfigError, LearnerConfig, resolve_conditioning
from .momdp import DeterministicPolicy, MOMDPError, expected_return_exact, monte_carlo_return
from .runner import (
    ExperimentConfig,
    default_utility,
    parse_agent,
    parse_seeds,
    reproduce,
    run_experiment,
    solve,
    summarise,
)
from .scalarisation import parse_utility


class UsageError(Exception):
    pass


def _load_env(spec: str):
    try:
        return resolve_environment(spec)
    except FileNotFoundError:
        raise UsageError(f"no such environment or file: {spec}") from None
    except MOMDPError as exc:
        raise UsageError(str(exc)) from None


def cmd_solve(args) -> int:
    env = _load_env(args.env)
    try:
        utility = parse_utility(args.utility)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(solve(env, utility, args.out, args.esr_mode), end="")
    return 0


def cmd_train(args) -> int:
    try:
        selector = parse_agent(args.agent)
        learner = LearnerConfig(
            episodes=args.episodes, alpha=args.alpha, epsilon=args.epsilon,
            conditioning=args.conditioning, alpha_schedule=args.alpha_schedule,
        )
        resolve_conditioning(selector, learner.conditioning)
        utility = parse_utility(args.utility) if args.utility else default_utility(selector)
        seeds = parse_seeds(args.seeds)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _load_env(args.env)
    cfg = ExperimentConfig(args.env, selector, learner, utility, seeds, Path(args.out))
    print(summarise(run_experiment(cfg)), end="")
    return 0


def cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
        resolve_conditioning(cfg.selector, cfg.learner.conditioning)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    _load_env(cfg.environment)
    print(summarise(run_experiment(cfg)), end="")
    return 0


def cmd_evaluate(args) -> int:
    env = _load_env(args.env)
    try:
        policy = DeterministicPolicy.parse(args.policy)
        exact = expected_return_exact(env, policy)
        mean, stderr = monte_carlo_return(env, policy, args.episodes, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"exact: {fmt_vec(exact)}")
    print(f"monte carlo ({args.episodes} episodes, seed {args.seed}): {fmt_vec(mean)}")
    print(f"stderr: {fmt_vec(stderr)}")
    z = [(m - e) / s if s > 0 else 0.0 for m, e, s in zip(mean, exact, stderr)]
    print("z: (" + ", ".join(fmt(x) for x in z) + ")")
    return 0


def cmd_reproduce(args) -> int:
    ok, text = reproduce(args.out)
    print(text, end="")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sermorl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="exact policy table, Pareto front, SER/ESR optima")
    p.add_argument("--env", required=True, help="built-in name (space_traders, bryce) or JSON file")
    p.add_argument("--utility", default="threshold:0.88:strict",
                   help="threshold:<t>[:strict] or linear:<w0,w1>")
    p.add_argument("--esr-mode", default="auto", choices=["auto", "episode", "per_branch"])
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train Q-learning agents over several seeds")
    p.add_argument("--env", required=True)
    p.add_argument("--agent", required=True, help="tlo:<threshold> or linear:<w0,w1>")
    p.add_argument("--episodes", type=int, default=200_000)
    p.add_argument("--seeds", default="0", help="e.g. 1..20 or 1,2,3")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--alpha-schedule", default="constant", choices=["constant", "decay"])
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--conditioning", choices=["plain", "accrued"], default=None)
    p.add_argument("--utility", default=None)
    p.add_argument("--out", default="train_out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="run an experiment from a JSON config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="exact vs Monte Carlo return of one policy")
    p.add_argument("--env", required=True)
    p.add_argument("--policy", required=True, help="e.g. A=Direct,B=Indirect")
    p.add_argument("--episodes", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reproduce", help="regenerate the tables and figure data")
    p.add_argument("--out", default="reproduction")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
