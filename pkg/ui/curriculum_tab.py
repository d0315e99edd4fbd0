"""
Curriculum history tab for the LearningFlow dashboard.
"""

import pandas as pd

from app_controller import RunController
from visualization import create_curriculum_timeline_plot


def render_curriculum_tab(st_obj):
    """
    Render the Curriculum tab UI.

    Args:
        st_obj: Streamlit instance
    """
    st_obj.header("Curriculum History")

    history = RunController.get_history()
    if history is None or not history.curriculum:
        st_obj.warning("No curriculum decisions recorded for this run.")
        return

    st_obj.pyplot(create_curriculum_timeline_plot(history.curriculum))

    fallbacks = sum(d.fallback for d in history.curriculum)
    if fallbacks:
        st_obj.warning(f"{fallbacks} curriculum step(s) fell back to the previous curriculum.")

    frame = pd.DataFrame([{
        'episode': d.episode,
        'deployed': d.curriculum.label,
        'origin': d.origin,
        'llm choice': d.llm_curriculum.label,
        'fallback': d.fallback,
        'rationale': d.rationale,
    } for d in history.curriculum])
    st_obj.dataframe(frame, use_container_width=True)
