"""
Metrics Recorder Agent - appends the iteration to the metrics log and checkpoints
"""
import numpy as np

from services.service_factory import ServiceFactory
from models.training import IterationMetrics
from agents.training_state import TrainingState
from agents.training_context import get_current_run
from utils.logging_config import get_logger

logger = get_logger('agents.metrics_recorder')


def checkpoint_metadata(state: TrainingState, iteration: int) -> dict:
    run = get_current_run()
    return {
        'iteration': iteration,
        'config_hash': run.config.config_hash(),
        'config': run.config.model_dump(mode='json'),
        'loss_history': [entry['losses']['total'] for entry in state.get('metrics', [])],
        'run_id': run.run_id,
    }


def record_metrics_agent(state: TrainingState) -> TrainingState:
    """Log loss terms, mean cycle error and mean |T(t_med) - 0.5|"""

    run = get_current_run()

    try:
        residuals = [r.median_residual[r.valid_mask] for r in state['results']]
        residuals = np.concatenate(residuals) if residuals else np.zeros(0)
        gradients = state['gradients']

        entry = IterationMetrics(
            iteration=state['iteration'],
            views=state['view_indices'],
            losses=state['losses'],
            mean_median_residual=float(residuals.mean()) if residuals.size else 0.0,
            skipped_pixels=gradients.skipped_pixels,
            gradient_max_abs=gradients.max_abs(),
            geometric_active=state['iteration'] >= run.config.geometric_start_iter,
        )
        metrics = state.get('metrics', []) + [entry.model_dump()]
        iteration = state['iteration'] + 1

        logger.info(f"[{run.run_id}] iteration {entry.iteration}: loss {entry.losses.total:.6f}, "
                    f"cycle {entry.losses.mean_cycle_error:.4f} px, residual {entry.mean_median_residual:.2e}")

        state.update({
            'current_step': 'record_metrics',
            'metrics': metrics,
            'iteration': iteration,
        })

        every = run.config.checkpoint_every
        if run.config.checkpoint_path and every and iteration % every == 0 and iteration < run.config.iterations:
            ServiceFactory.get_scene_io_service().save_checkpoint(
                state['scene'], run.config.checkpoint_path, checkpoint_metadata(state, iteration)
            )
        return state

    except Exception as e:
        logger.error(f"Error recording metrics at iteration {state.get('iteration')}: {e}")
        state['error_message'] = str(e)
        return state


def check_training_progress(state: TrainingState) -> str:
    """Route after an iteration: continue, done or failed"""
    if state.get('error_message'):
        return 'failed'
    if state['iteration'] >= get_current_run().config.iterations:
        return 'done'
    return 'continue'
