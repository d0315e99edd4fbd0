"""
Scaled-down acceptance experiments.

sanity: a dense goal-progress reward on the empty overtaking road must
    reach a high greedy success rate.
lift: the full pipeline (scripted curriculum and reward refinements) against
    the fixed-reward, no-curriculum baseline over several seeds.

Both take tens of minutes on a CPU and are run from ``cli.py experiment``.
"""

import logging
import os
from typing import Any, Dict, Sequence

import pandas as pd

from learningFlow.driving_sim import Density, default_scenario
from learningFlow.file_handler import save_config, save_csv
from learningFlow.llm_gateway import ProviderConfig
from learningFlow.orchestrator import (
    RunConfig, evaluate, export_metrics, latest_policy, train,
)

logger = logging.getLogger(__name__)

SANITY_EPISODES = 2000
SANITY_THRESHOLD = 90.0
LIFT_EPISODES = 3000
LIFT_SEEDS = (0, 1, 2)
LIFT_THRESHOLD = 10.0


def sanity(out_dir: str, mock_dir: str = "mock_scripts/sanity", episodes: int = SANITY_EPISODES,
           seed: int = 0, eval_episodes: int = 100) -> Dict[str, Any]:
    """
    Train on the empty overtaking road with the scripted dense reward and evaluate greedily.

    Returns:
        Dictionary with the evaluation cell and whether S reached SANITY_THRESHOLD
    """
    run_dir = os.path.join(out_dir, "sanity")
    config = RunConfig(
        scenario=default_scenario("overtaking"),
        episodes=episodes,
        seed=seed,
        provider=ProviderConfig(provider="mock", mock_dir=mock_dir),
        out_dir=run_dir,
        eval_episodes=eval_episodes,
        no_curriculum=True,
        target_density=int(Density.EMPTY),
        method="sanity",
    )
    train(config)
    report = evaluate(latest_policy(run_dir), "overtaking", [int(Density.EMPTY)],
                      episodes=eval_episodes, method="sanity", out_dir=run_dir)
    export_metrics(run_dir)
    cell = report.cells[0]
    result = {
        'success': cell.success,
        'collision': cell.collision,
        'timeout': cell.timeout,
        'threshold': SANITY_THRESHOLD,
        'passed': cell.success >= SANITY_THRESHOLD,
    }
    save_config(result, os.path.join(out_dir, "sanity_report.yaml"))
    logger.info("Sanity experiment: S %.1f%% (threshold %.1f%%) -> %s",
                cell.success, SANITY_THRESHOLD, "pass" if result['passed'] else "fail")
    return result


def lift(out_dir: str, mock_dir: str = "mock_scripts/overtaking", seeds: Sequence[int] = LIFT_SEEDS,
         episodes: int = LIFT_EPISODES, eval_episodes: int = 100) -> Dict[str, Any]:
    """
    Compare the full pipeline with the vanilla baseline on low-density overtaking.

    Returns:
        Dictionary with per-seed success rates, both means, the lift in
        percentage points and whether it reached LIFT_THRESHOLD
    """
    rows = []
    for seed in seeds:
        for method, overrides in (
                ("learningflow", {'provider': ProviderConfig(provider="mock", mock_dir=mock_dir)}),
                ("vanilla_ppo", {'fixed_reward': True, 'no_curriculum': True})):
            run_dir = os.path.join(out_dir, f"{method}_seed{seed}")
            config = RunConfig(
                scenario=default_scenario("overtaking"),
                episodes=episodes,
                seed=seed,
                out_dir=run_dir,
                eval_episodes=eval_episodes,
                target_density=int(Density.LOW),
                method=method,
                **overrides,
            )
            train(config)
            report = evaluate(latest_policy(run_dir), "overtaking", [int(Density.LOW)],
                              episodes=eval_episodes, method=method, out_dir=run_dir)
            cell = report.cells[0]
            rows.append({'method': method, 'seed': seed, 'S': cell.success, 'C': cell.collision, 'TO': cell.timeout})
            logger.info("Lift experiment %s seed %d: S %.1f%%", method, seed, cell.success)

    frame = pd.DataFrame(rows)
    save_csv(frame, os.path.join(out_dir, "lift_runs.csv"))
    means = frame.groupby('method')['S'].mean()
    gain = float(means['learningflow'] - means['vanilla_ppo'])
    result = {
        'learningflow_mean_S': float(means['learningflow']),
        'vanilla_mean_S': float(means['vanilla_ppo']),
        'lift': gain,
        'threshold': LIFT_THRESHOLD,
        'passed': gain >= LIFT_THRESHOLD,
    }
    save_config(result, os.path.join(out_dir, "lift_report.yaml"))
    logger.info("Lift experiment: %.1f percentage points (threshold %.1f) -> %s",
                gain, LIFT_THRESHOLD, "pass" if result['passed'] else "fail")
    return result
