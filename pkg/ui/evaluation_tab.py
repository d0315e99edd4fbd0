"""
Evaluation tab for the LearningFlow dashboard.

This module shows the stored evaluation reports and the trajectory dumps of a run.
"""

import pandas as pd

from app_controller import RunController
from learningFlow.file_handler import load_csv
from visualization import create_eval_bar_plot, create_trajectory_plot


def render_evaluation_tab(st_obj):
    """
    Render the Evaluation tab UI.

    Args:
        st_obj: Streamlit instance
    """
    st_obj.header("Evaluation")

    frames = RunController.get_eval_frames()
    if not frames:
        st_obj.info("No evaluation reports yet. Run `python cli.py evaluate --checkpoint ... --out <run>`.")
    else:
        table = pd.concat(frames.values(), ignore_index=True)
        st_obj.dataframe(table, use_container_width=True)
        st_obj.pyplot(create_eval_bar_plot(table))

    trajectories = RunController.list_trajectories()
    if trajectories:
        st_obj.subheader("Trajectories")
        selected = st_obj.selectbox("Trajectory dump", trajectories, key="trajectory_file")
        try:
            trajectory = load_csv(selected)
        except IOError as e:
            st_obj.error(str(e))
            return
        st_obj.pyplot(create_trajectory_plot(trajectory, RunController.get_scenario()))
