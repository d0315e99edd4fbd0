"""
Reward generations tab for the LearningFlow dashboard.

This module lists every activated reward program with its episode range,
lint warnings and the analysis that produced it.
"""

from app_controller import RunController


def render_rewards_tab(st_obj):
    """
    Render the Rewards tab UI.

    Args:
        st_obj: Streamlit instance
    """
    st_obj.header("Reward Programs")

    history = RunController.get_history()
    if history is None or not history.rewards:
        st_obj.warning("No reward programs recorded for this run.")
        return

    for entry in history.rewards:
        title = (f"Generation {entry.generation}: episodes {entry.episode_start}-{entry.episode_end} "
                 f"({entry.origin}, {entry.fingerprint})")
        with st_obj.expander(title, expanded=entry is history.rewards[-1]):
            st_obj.code(entry.source, language=None)
            for warning in entry.lint_warnings:
                st_obj.warning(warning)
            if entry.analysis:
                st_obj.markdown("**Analysis**")
                st_obj.text(entry.analysis)
