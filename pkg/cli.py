"""
Command-line entry point for training, evaluation, export and the acceptance experiments.

Exit codes: 0 success, 2 configuration error, 3 no initial reward program
could be obtained (gateway exhausted and no fallback configured).
"""

import argparse
import logging
import os
import sys

from learningFlow.driving_sim import Density, ScenarioConfig, Task, default_scenario
from learningFlow.errors import ConfigurationError, GatewayUnavailableError
from learningFlow.file_handler import load_config
from learningFlow.llm_gateway import ProviderConfig
from learningFlow.orchestrator import (
    RunConfig, evaluate, export_metrics, load_run_config, resume, train,
)

logger = logging.getLogger("learningFlow.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GATEWAY = 3
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
DENSITY_NAMES = [d.name.lower() for d in Density]


def setup_logging(run_dir: str = None, verbose: bool = False):
    """Stream handler for the console plus train.log inside the run directory."""
    handlers = [logging.StreamHandler()]
    if run_dir:
        os.makedirs(run_dir, exist_ok=True)
        handlers.append(logging.FileHandler(os.path.join(run_dir, "train.log"), encoding="utf-8"))
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT,
                        handlers=handlers, force=True)


def scenario_from_arg(value: str) -> ScenarioConfig:
    """A task name or the path of a scenario YAML file."""
    if value in [t.value for t in Task]:
        return default_scenario(value)
    try:
        data = load_config(value)
    except IOError as e:
        raise ConfigurationError(f"scenario '{value}' is neither a task nor a readable file ({e})")
    return ScenarioConfig.from_dict(data)


def build_run_config(args) -> RunConfig:
    if args.config:
        config = load_run_config(args.config)
        if args.out:
            config.out_dir = args.out
        return config
    provider = None
    if args.provider == "http" or args.mock_dir:
        provider = ProviderConfig(provider=args.provider, mock_dir=args.mock_dir,
                                  endpoint=args.endpoint, model=args.model)
    fallback = None
    if args.fallback_reward:
        with open(args.fallback_reward, "r", encoding="utf-8") as f:
            fallback = f.read()
    return RunConfig(
        scenario=scenario_from_arg(args.scenario),
        episodes=args.episodes,
        seed=args.seed,
        provider=provider,
        out_dir=args.out,
        fixed_reward=args.fixed_reward,
        no_curriculum=args.no_curriculum,
        no_analysis=args.no_analysis,
        target_density=DENSITY_NAMES.index(args.target_density),
        fallback_reward=fallback,
    )


def cmd_train(args) -> int:
    if args.resume:
        setup_logging(args.out, args.verbose)
        resume(args.out)
        return EXIT_OK
    config = build_run_config(args)
    setup_logging(config.out_dir, args.verbose)
    train(config)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    setup_logging(args.out, args.verbose)
    densities = [DENSITY_NAMES.index(name) for name in args.density]
    report = evaluate(args.checkpoint, scenario_from_arg(args.task), densities, episodes=args.episodes,
                      method=args.method, out_dir=args.out,
                      dump_dir=os.path.join(args.out, "trajectories") if args.dump_trajectories else None)
    print(report.to_frame().to_string(index=False))
    return EXIT_OK


def cmd_export(args) -> int:
    setup_logging(None, args.verbose)
    written = export_metrics(args.run, window=args.window, excel=not args.no_excel, plots=args.plots)
    for name, path in written.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    from learningFlow import experiments

    setup_logging(args.out, args.verbose)
    if args.name == "sanity":
        result = experiments.sanity(args.out, mock_dir=args.mock_dir or "mock_scripts/sanity",
                                    episodes=args.episodes or experiments.SANITY_EPISODES)
    else:
        result = experiments.lift(args.out, mock_dir=args.mock_dir or "mock_scripts/overtaking",
                                  episodes=args.episodes or experiments.LIFT_EPISODES)
    for key, value in result.items():
        print(f"{key}: {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="LLM-guided curriculum and reward design for driving policies")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a policy")
    p.add_argument("--config", help="run configuration YAML (overrides the flags below)")
    p.add_argument("--scenario", default="overtaking", help="overtaking, merging or a scenario YAML path")
    p.add_argument("--episodes", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--provider", choices=["http", "mock"], default="mock")
    p.add_argument("--mock-dir")
    p.add_argument("--endpoint", default="https://api.openai.com/v1")
    p.add_argument("--model", default="gpt-4o")
    p.add_argument("--out", default="runs/default")
    p.add_argument("--fixed-reward", action="store_true", help="skip the reward workflow")
    p.add_argument("--no-curriculum", action="store_true", help="train on the target density only")
    p.add_argument("--no-analysis", action="store_true", help="generation agents without analysis agents")
    p.add_argument("--target-density", choices=DENSITY_NAMES, default="low")
    p.add_argument("--fallback-reward", help="reward program file used when no R0 can be generated")
    p.add_argument("--resume", action="store_true", help="continue the run in --out from its last checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint greedily")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", default="overtaking")
    p.add_argument("--density", nargs="+", choices=DENSITY_NAMES, default=DENSITY_NAMES)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--method", default="policy", help="row label in the evaluation table")
    p.add_argument("--out", required=True)
    p.add_argument("--dump-trajectories", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="write training_curve.csv and eval_table.csv")
    p.add_argument("--run", required=True)
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--no-excel", action="store_true")
    p.add_argument("--plots", action="store_true", help="also save PNG figures")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("experiment", help="run an acceptance experiment")
    p.add_argument("name", choices=["sanity", "lift"])
    p.add_argument("--out", required=True)
    p.add_argument("--mock-dir")
    p.add_argument("--episodes", type=int)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG
    except GatewayUnavailableError as e:
        logger.error("No initial reward program: %s", e)
        return EXIT_GATEWAY


if __name__ == "__main__":
    sys.exit(main())
