"""
Error Handler Agent - Handles training errors and writes the last good checkpoint
"""
from services.service_factory import ServiceFactory
from agents.training_state import TrainingState
from agents.training_context import get_current_run
from agents.metrics_recorder import checkpoint_metadata
from utils.logging_config import get_logger

logger = get_logger('agents.error_handler')


def handle_error_agent(state: TrainingState) -> TrainingState:
    """Mark the run failed and save the last scene known to be finite"""

    run = get_current_run()
    scene_io = ServiceFactory.get_scene_io_service()

    try:
        logger.error(f"[{run.run_id}] training failed at iteration {state.get('iteration')}: "
                     f"{state.get('error_message')}")

        # a failed update leaves the scene whose loss was finite in place;
        # any later failure blames the scene produced by the previous update
        last_good = state.get('last_good_scene', state.get('scene'))
        if state.get('current_step') == 'backpropagate':
            last_good = state.get('scene', last_good)
        state['last_good_scene'] = last_good

        if run.config.checkpoint_path and last_good is not None:
            metadata = checkpoint_metadata(state, state.get('iteration', 0))
            metadata['aborted'] = True
            metadata['error_message'] = state.get('error_message', 'Unknown error')
            scene_io.save_checkpoint(last_good, run.config.checkpoint_path, metadata)

        state.update({
            'current_step': 'error',
            'status': 'failed'
        })
        return state

    except Exception as e:
        logger.error(f"Error in error handler: {e}")
        state['status'] = 'failed'
        return state
