"""
LearningFlow run dashboard - browse training runs, agent decisions and evaluations

This is the main entry point for the dashboard.
It uses modular components from the ui/ directory and the app_controller.py.
"""

import streamlit as st

from app_controller import RUNS_ROOT, RunController
from ui.training_tab import render_training_tab
from ui.curriculum_tab import render_curriculum_tab
from ui.rewards_tab import render_rewards_tab
from ui.evaluation_tab import render_evaluation_tab
from ui.transcripts_tab import render_transcripts_tab

# Set page configuration
st.set_page_config(
    page_title="LearningFlow Runs",
    page_icon="🚗",
    layout="wide"
)

RunController.initialize_session_state()

with st.sidebar:
    st.header("Run")
    root = st.text_input("Runs directory", value=RUNS_ROOT)
    runs = RunController.list_runs(root)
    if runs:
        run_dir = st.selectbox("Run directory", runs)
    else:
        st.warning(f"No runs found under {root}.")
        run_dir = st.text_input("Run directory path")

    if st.button("🔄 Load Run") and run_dir:
        if RunController.load_run(run_dir) is not None:
            st.success(f"Loaded {run_dir}")

    st.sidebar.markdown("---")
    st.sidebar.header("About")
    st.sidebar.info(
        "This dashboard shows LearningFlow training runs: policy progress, "
        "the curricula and reward programs chosen by the agents, and evaluation results."
    )

if st.session_state.history is None:
    st.info("Select a run directory in the sidebar and press Load Run.")
    st.stop()

tabs = st.tabs([
    "Training",
    "Curriculum",
    "Reward Programs",
    "Evaluation",
    "Transcripts"
])

with tabs[0]:
    render_training_tab(st)

with tabs[1]:
    render_curriculum_tab(st)

with tabs[2]:
    render_rewards_tab(st)

with tabs[3]:
    render_evaluation_tab(st)

with tabs[4]:
    render_transcripts_tab(st)
