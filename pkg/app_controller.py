"""
Controller module for the LearningFlow run dashboard.

This module manages the dashboard state and loads run directories through the
run store and the metrics export helpers.
"""

import glob
import os
from typing import Dict, List, Optional

import pandas as pd
import streamlit as st

from learningFlow.driving_sim import ScenarioConfig
from learningFlow.errors import LearningFlowError
from learningFlow.file_handler import load_csv
from learningFlow.memory_store import CONFIG_SNAPSHOT, EVAL_DIR, RunHistory, RunStore
from learningFlow.orchestrator import training_curve

# Constants
RUNS_ROOT = "runs"
DEFAULT_WINDOW = 100


class RunController:
    """Controller class for managing dashboard state and run loading."""

    @staticmethod
    def initialize_session_state():
        """Initialize the session state with default values."""
        if 'run_dir' not in st.session_state:
            st.session_state.run_dir = None

        if 'history' not in st.session_state:
            st.session_state.history = None

        if 'window' not in st.session_state:
            st.session_state.window = DEFAULT_WINDOW

    @staticmethod
    def list_runs(root: str = RUNS_ROOT) -> List[str]:
        """Run directories (anything holding a config snapshot) below root."""
        snapshots = glob.glob(os.path.join(root, "**", CONFIG_SNAPSHOT), recursive=True)
        return sorted(os.path.dirname(path) for path in snapshots)

    @staticmethod
    def load_run(run_dir: str) -> Optional[RunHistory]:
        """Load every history stream of a run into session state."""
        RunController.initialize_session_state()
        try:
            history = RunStore(run_dir).load()
        except (IOError, LearningFlowError) as e:
            st.error(f"Error loading run {run_dir}: {e}")
            return None
        st.session_state.run_dir = run_dir
        st.session_state.history = history
        return history

    @staticmethod
    def get_history() -> Optional[RunHistory]:
        RunController.initialize_session_state()
        return st.session_state.history

    @staticmethod
    def get_training_curve(window: int) -> Optional[pd.DataFrame]:
        history = RunController.get_history()
        if history is None or not history.episodes:
            return None
        return training_curve(history.episodes, window)

    @staticmethod
    def get_scenario() -> Optional[ScenarioConfig]:
        run_dir = st.session_state.get('run_dir')
        if not run_dir:
            return None
        try:
            snapshot = RunStore(run_dir).load_config_snapshot()
            return ScenarioConfig.from_dict(snapshot['scenario'])
        except (IOError, KeyError, LearningFlowError) as e:
            st.warning(f"Could not read the scenario of {run_dir}: {e}")
            return None

    @staticmethod
    def get_eval_frames() -> Dict[str, pd.DataFrame]:
        """Evaluation reports stored under <run>/eval/, keyed by file name."""
        run_dir = st.session_state.get('run_dir')
        if not run_dir:
            return {}
        frames = {}
        for path in sorted(glob.glob(os.path.join(run_dir, EVAL_DIR, "*.csv"))):
            try:
                frames[os.path.basename(path)] = load_csv(path)
            except IOError as e:
                st.error(str(e))
        return frames

    @staticmethod
    def list_trajectories() -> List[str]:
        run_dir = st.session_state.get('run_dir')
        if not run_dir:
            return []
        return sorted(glob.glob(os.path.join(run_dir, "**", "trajectory_*.csv"), recursive=True))
