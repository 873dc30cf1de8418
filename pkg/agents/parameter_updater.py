"""
Parameter Updater Agent - applies one optimizer step
"""
from agents.training_state import TrainingState
from agents.training_context import get_current_run
from utils.logging_config import get_logger

logger = get_logger('agents.parameter_updater')


def apply_updates_agent(state: TrainingState) -> TrainingState:
    """Step the optimizer; the pre-update scene becomes the last good one"""

    run = get_current_run()

    try:
        previous = state['scene']
        scene = run.optimizer.step(state['gradients'])
        state.update({
            'current_step': 'apply_updates',
            'last_good_scene': previous,
            'scene': scene,
        })
        return state

    except Exception as e:
        logger.error(f"Error applying updates at iteration {state.get('iteration')}: {e}")
        state['error_message'] = str(e)
        return state
