"""
Agent transcripts tab for the LearningFlow dashboard.
"""

import pandas as pd

from app_controller import RunController


def render_transcripts_tab(st_obj):
    """
    Render the Transcripts tab UI.

    Args:
        st_obj: Streamlit instance
    """
    st_obj.header("Agent Transcripts")

    history = RunController.get_history()
    if history is None or not history.transcripts:
        st_obj.warning("No transcripts recorded for this run.")
        return

    frame = pd.DataFrame(history.transcripts)
    roles = sorted(frame['role'].unique())
    selected = st_obj.multiselect("Roles", roles, default=roles, key="transcript_roles")
    frame = frame[frame['role'].isin(selected)]

    failures = frame[frame['outcome'] != 'ok']
    if not failures.empty:
        st_obj.warning(f"{len(failures)} attempt(s) failed in transport or extraction.")

    st_obj.dataframe(frame[['timestamp', 'role', 'episode', 'attempt', 'outcome']], use_container_width=True)
    for record in frame.itertuples():
        with st_obj.expander(f"episode {record.episode} / {record.role} / attempt {record.attempt}: {record.outcome}"):
            st_obj.text(record.prompt)
            st_obj.markdown("**Response**")
            st_obj.text(record.response if isinstance(record.response, str) else "(no response)")
