"""
SolidSplat Training Agents Package

This package contains individual agent functions that handle the steps of
one optimization iteration.
"""

from .training_state import TrainingState
from .training_context import TrainingContext, TrainingRun, get_current_run
from .view_renderer import render_views_agent
from .loss_evaluator import evaluate_losses_agent
from .gradient_backprop import backpropagate_agent
from .parameter_updater import apply_updates_agent
from .metrics_recorder import record_metrics_agent, check_training_progress
from .error_handler import handle_error_agent

__all__ = [
    'TrainingState',
    'TrainingContext',
    'TrainingRun',
    'get_current_run',
    'render_views_agent',
    'evaluate_losses_agent',
    'backpropagate_agent',
    'apply_updates_agent',
    'record_metrics_agent',
    'check_training_progress',
    'handle_error_agent'
]
