"""
Visualization module for the LearningFlow run dashboard.

This module provides the matplotlib figures shown in the dashboard tabs and
saved by ``cli.py export --plots``.
"""

import os
from typing import Dict, List, Optional, Sequence

import matplotlib.pyplot as plt
import matplotlib.ticker as mticker
import pandas as pd

from learningFlow.driving_sim import Density, ScenarioConfig
from learningFlow.memory_store import CurriculumDecision

OUTCOME_COLORS = {'S': '#2e7d32', 'C': '#c62828', 'TO': '#f9a825'}


def format_percentage(x, pos):
    """Format axis ticks as percentages."""
    return f"{x:.0f}%"


def setup_plot_style(figsize=(10, 6)):
    """Set up a plot with standard styling."""
    fig, ax = plt.subplots(figsize=figsize)

    plt.rcParams['font.family'] = 'sans-serif'
    plt.rcParams['font.sans-serif'] = ['Arial', 'DejaVu Sans', 'Liberation Sans']

    ax.grid(linestyle='--', alpha=0.7)
    ax.set_facecolor('#f8f9fa')
    fig.patch.set_facecolor('#ffffff')

    return fig, ax


def create_training_curve_plot(curve: pd.DataFrame) -> plt.Figure:
    """
    Mean reward per window with the outcome rates on a second axis.

    Args:
        curve: DataFrame from orchestrator.training_curve

    Returns:
        Matplotlib figure
    """
    fig, ax = setup_plot_style()
    ax.plot(curve['episode'], curve['mean_reward'], color='#1565c0', marker='o', label='Mean reward')
    ax.set_xlabel('Episode')
    ax.set_ylabel('Mean episode reward')

    rates = ax.twinx()
    for column, key, label in (('success_rate', 'S', 'Success'), ('collision_rate', 'C', 'Collision'),
                               ('timeout_rate', 'TO', 'Timeout')):
        rates.plot(curve['episode'], 100 * curve[column], color=OUTCOME_COLORS[key],
                   linestyle='--', label=label)
    rates.set_ylim(0, 100)
    rates.yaxis.set_major_formatter(mticker.FuncFormatter(format_percentage))
    rates.set_ylabel('Rate')

    lines, labels = ax.get_legend_handles_labels()
    more_lines, more_labels = rates.get_legend_handles_labels()
    ax.legend(lines + more_lines, labels + more_labels, loc='upper left')
    ax.set_title('Training Progress')
    return fig


def create_component_plot(curve: pd.DataFrame) -> plt.Figure:
    """Window means of every reward component that appears in the curve."""
    fig, ax = setup_plot_style()
    columns = [c for c in curve.columns if c.startswith('component_')]
    for column in columns:
        ax.plot(curve['episode'], curve[column], marker='.', label=column[len('component_'):])
    ax.axhline(0.0, color='#555555', linewidth=0.8)
    ax.set_xlabel('Episode')
    ax.set_ylabel('Mean component sum per episode')
    ax.set_title('Reward Components')
    if columns:
        ax.legend(title='Component')
    return fig


def create_curriculum_timeline_plot(decisions: Sequence[CurriculumDecision]) -> plt.Figure:
    """
    Step plot of the density and motion mode chosen at each curriculum boundary.

    Random-origin deployments are marked with crosses.
    """
    fig, ax = setup_plot_style(figsize=(10, 4))
    if decisions:
        episodes = [d.episode for d in decisions]
        ax.step(episodes, [d.llm_density for d in decisions], where='post', label='Density (LLM)')
        ax.step(episodes, [d.llm_mode for d in decisions], where='post', linestyle='--', label='Mode (LLM)')
        random_points = [d for d in decisions if d.origin == 'random']
        if random_points:
            ax.scatter([d.episode for d in random_points], [d.density for d in random_points],
                       marker='x', color='#c62828', label='Random draw')
        ax.legend(loc='upper left')
    ax.set_yticks([int(d) for d in Density])
    ax.set_xlabel('Episode')
    ax.set_ylabel('Index')
    ax.set_title('Curriculum Timeline')
    return fig


def create_eval_bar_plot(frame: pd.DataFrame) -> plt.Figure:
    """
    Stacked S / C / TO bars per (method, task, density).

    Args:
        frame: Rows of EvalReport.to_frame(), possibly several reports concatenated
    """
    fig, ax = setup_plot_style()
    labels = [f"{row.method}\n{row.task}/{row.density}" for row in frame.itertuples()]
    bottom = pd.Series(0.0, index=frame.index)
    for key in ('S', 'C', 'TO'):
        ax.bar(labels, frame[key], bottom=bottom, color=OUTCOME_COLORS[key], label=key)
        bottom = bottom + frame[key]
    ax.set_ylim(0, 100)
    ax.yaxis.set_major_formatter(mticker.FuncFormatter(format_percentage))
    ax.set_ylabel('Share of episodes')
    ax.set_title('Evaluation Outcomes')
    ax.legend()
    plt.setp(ax.get_xticklabels(), rotation=30, ha='right')
    fig.tight_layout()
    return fig


def create_trajectory_plot(trajectory: pd.DataFrame, scenario: Optional[ScenarioConfig] = None) -> plt.Figure:
    """
    Top-down paths of every vehicle in a trajectory dump; vehicle 0 is the ego.

    Lane boundaries are drawn when the scenario is given.
    """
    fig, ax = setup_plot_style(figsize=(12, 4))
    if scenario is not None:
        for k in range(scenario.lane_count + 1):
            ax.axhline(k * scenario.lane_width, color='#9e9e9e', linewidth=0.8,
                       linestyle='-' if k in (0, scenario.lane_count) else ':')
    for vehicle_id, path in trajectory.groupby('vehicle_id'):
        if vehicle_id == 0:
            ax.plot(path['x'], path['y'], color='#1565c0', linewidth=2.0, label='Ego')
        else:
            ax.plot(path['x'], path['y'], color='#757575', linewidth=1.0)
            ax.scatter(path['x'].iloc[-1], path['y'].iloc[-1], color='#757575', s=12)
    ax.set_xlabel('x (m)')
    ax.set_ylabel('y (m)')
    ax.set_title('Episode Trajectory')
    ax.legend(loc='upper left')
    return fig


def save_training_figures(curve: pd.DataFrame, decisions: List[CurriculumDecision],
                          run_dir: str) -> Dict[str, str]:
    """Save the training figures of a run as PNG files; returns name -> path."""
    figures = {
        'training_curve_png': (create_training_curve_plot(curve), "training_curve.png"),
        'components_png': (create_component_plot(curve), "components.png"),
        'curriculum_png': (create_curriculum_timeline_plot(decisions), "curriculum.png"),
    }
    written = {}
    for name, (fig, filename) in figures.items():
        path = os.path.join(run_dir, filename)
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written[name] = path
    return written
