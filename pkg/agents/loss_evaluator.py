"""
Loss Evaluator Agent - combined loss and image-space gradients
"""
from agents.training_state import TrainingState
from agents.training_context import get_current_run
from utils.logging_config import get_logger

logger = get_logger('agents.loss_evaluator')


def evaluate_losses_agent(state: TrainingState) -> TrainingState:
    """Evaluate L = L_c + w_n L_n + L_mv; geometric terms start at geometric_start_iter"""

    run = get_current_run()

    try:
        geometric = state['iteration'] >= run.config.geometric_start_iter
        views = [run.views[i] for i in state['view_indices']]
        losses, upstreams = run.loss_service.evaluate(views, state['results'], geometric=geometric)

        state.update({
            'current_step': 'evaluate_losses',
            'losses': losses,
            'upstreams': upstreams,
        })
        return state

    except Exception as e:
        logger.error(f"Error evaluating losses at iteration {state.get('iteration')}: {e}")
        state['error_message'] = str(e)
        return state
