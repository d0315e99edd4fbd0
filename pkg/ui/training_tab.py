"""
Training progress tab for the LearningFlow dashboard.

This module renders the windowed training curve and the per-component reward means.
"""

from app_controller import RunController
from visualization import create_component_plot, create_training_curve_plot


def render_training_tab(st_obj):
    """
    Render the Training tab UI.

    Args:
        st_obj: Streamlit instance
    """
    st_obj.header("Training Progress")

    history = RunController.get_history()
    if history is None or not history.episodes:
        st_obj.warning("No episode records yet. Select a run with at least one finished episode.")
        return

    window = st_obj.slider("Smoothing window (episodes)", min_value=10, max_value=1000,
                           value=st_obj.session_state.window, step=10, key="training_window")
    st_obj.session_state.window = window
    curve = RunController.get_training_curve(window)

    last = curve.iloc[-1]
    col1, col2, col3, col4 = st_obj.columns(4)
    col1.metric("Episodes", len(history.episodes))
    col2.metric("Success (last window)", f"{100 * last['success_rate']:.1f}%")
    col3.metric("Collision (last window)", f"{100 * last['collision_rate']:.1f}%")
    col4.metric("Mean reward (last window)", f"{last['mean_reward']:.2f}")

    st_obj.pyplot(create_training_curve_plot(curve))
    st_obj.subheader("Reward Components")
    st_obj.info("Component means are taken over the episodes whose active program declared the component.")
    st_obj.pyplot(create_component_plot(curve))

    with st_obj.expander("Training curve table"):
        st_obj.dataframe(curve, use_container_width=True)
