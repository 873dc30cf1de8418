"""
View Renderer Agent - renders the views sampled for this iteration
"""
from services.service_factory import ServiceFactory
from agents.training_state import TrainingState
from agents.training_context import get_current_run
from utils.logging_config import get_logger

logger = get_logger('agents.view_renderer')


def render_views_agent(state: TrainingState) -> TrainingState:
    """Render every sampled view of the current scene"""

    renderer = ServiceFactory.get_render_service()
    run = get_current_run()

    try:
        indices = run.sample_views()
        logger.debug(f"[{run.run_id}] iteration {state['iteration']}: rendering views {indices}")

        results = [
            renderer.render_view(state['scene'], run.views[i].camera, options=run.config.render)
            for i in indices
        ]
        state.update({
            'current_step': 'render_views',
            'view_indices': indices,
            'results': results,
        })
        return state

    except Exception as e:
        logger.error(f"Error rendering views at iteration {state.get('iteration')}: {e}")
        state['error_message'] = str(e)
        return state
