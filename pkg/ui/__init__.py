"""
UI components for the LearningFlow run dashboard.

This package contains one module per dashboard tab, separating the rendering
logic from the run loading in app_controller.py.
"""

from ui.training_tab import render_training_tab
from ui.curriculum_tab import render_curriculum_tab
from ui.rewards_tab import render_rewards_tab
from ui.evaluation_tab import render_evaluation_tab
from ui.transcripts_tab import render_transcripts_tab

__all__ = [
    'render_training_tab',
    'render_curriculum_tab',
    'render_rewards_tab',
    'render_evaluation_tab',
    'render_transcripts_tab',
]
