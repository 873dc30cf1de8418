"""
Gradient Backprop Agent - pushes image-space gradients onto the Gaussians
"""
from services.service_factory import ServiceFactory
from agents.training_state import TrainingState
from agents.training_context import get_current_run
from utils.logging_config import get_logger

logger = get_logger('agents.gradient_backprop')


def backpropagate_agent(state: TrainingState) -> TrainingState:
    """Accumulate and finalize dL/dtheta over the rendered views"""

    backward = ServiceFactory.get_gradient_service()
    run = get_current_run()

    try:
        cameras = [run.views[i].camera for i in state['view_indices']]
        gradients = backward.backward_views(state['scene'], cameras, state['results'], state['upstreams'],
                                            options=run.config.render)
        state.update({
            'current_step': 'backpropagate',
            'gradients': gradients,
        })
        return state

    except Exception as e:
        logger.error(f"Error in backward pass at iteration {state.get('iteration')}: {e}")
        state['error_message'] = str(e)
        return state
