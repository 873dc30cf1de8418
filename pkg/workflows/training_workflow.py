"""
LangGraph Workflow for Gaussian Optimization using Individual Agents
"""
from typing import Any, Dict, List, Sequence, Tuple
import uuid

from langgraph.graph import StateGraph, END

from agents import (
    TrainingState,
    TrainingContext,
    TrainingRun,
    render_views_agent,
    evaluate_losses_agent,
    backpropagate_agent,
    apply_updates_agent,
    record_metrics_agent,
    check_training_progress,
    handle_error_agent
)
from agents.metrics_recorder import checkpoint_metadata
from models.config import TrainConfig
from models.gaussian import Scene
from models.training import TrainingView
from services.service_factory import ServiceFactory
from utils.errors import InputValidationError, TrainingAbortedError
from utils.logging_config import get_logger

logger = get_logger('workflows.training')

# nodes visited per iteration
NODES_PER_ITERATION = 5


def _route_step(state: TrainingState) -> str:
    return 'failed' if state.get('error_message') else 'next'


class TrainingWorkflow:
    """
    LangGraph workflow for fitting Gaussians to posed images
    """

    def __init__(self):
        self.scene_io = ServiceFactory.get_scene_io_service()
        self.workflow = self._create_workflow()

        # Set when a run starts
        self.current_run_id = None

    def _create_workflow(self) -> StateGraph:
        """
        Create the LangGraph workflow using individual agents
        """
        workflow = StateGraph(TrainingState)

        # Add agent nodes
        workflow.add_node("render_views", render_views_agent)
        workflow.add_node("evaluate_losses", evaluate_losses_agent)
        workflow.add_node("backpropagate", backpropagate_agent)
        workflow.add_node("apply_updates", apply_updates_agent)
        workflow.add_node("record_metrics", record_metrics_agent)
        workflow.add_node("handle_error", handle_error_agent)

        # Each step moves on unless it recorded an error
        chain = ["render_views", "evaluate_losses", "backpropagate", "apply_updates", "record_metrics"]
        for step, following in zip(chain[:-1], chain[1:]):
            workflow.add_conditional_edges(step, _route_step, {"next": following, "failed": "handle_error"})

        workflow.add_conditional_edges(
            "record_metrics",
            check_training_progress,
            {
                "continue": "render_views",
                "done": END,
                "failed": "handle_error"
            }
        )
        workflow.add_edge("handle_error", END)

        workflow.set_entry_point("render_views")

        return workflow.compile()

    def run(self, scene: Scene, views: Sequence[TrainingView],
            config: TrainConfig) -> Tuple[Scene, List[Dict[str, Any]]]:
        """
        Optimize a scene against training views

        Returns:
            Tuple of the final scene and the metrics log, one entry per iteration

        Raises:
            TrainingAbortedError: a loss or update became non-finite
        """
        if len(scene) == 0:
            raise InputValidationError("Training needs a non-empty scene")
        if not views:
            raise InputValidationError("Training needs at least one view")
        if len(views) < 2:
            logger.warning("Fewer than two views: the multi-view loss stays inactive")

        run_id = str(uuid.uuid4())
        self.current_run_id = run_id

        optimizer = ServiceFactory.create_optimizer_service(config)
        optimizer.attach(scene)
        run = TrainingRun(run_id, config, list(views), ServiceFactory.create_loss_service(config), optimizer)

        initial_state = TrainingState(
            current_step="started",
            status="running",
            iteration=0,
            scene=scene,
            last_good_scene=scene,
            metrics=[],
            error_message=""
        )

        logger.info(f"Starting training run {run_id}: {len(scene)} Gaussian(s), {len(views)} view(s), "
                    f"{config.iterations} iteration(s), config {config.config_hash()[:12]}")

        limit = NODES_PER_ITERATION * config.iterations + 10
        with TrainingContext(run):
            result = self.workflow.invoke(initial_state, config={"recursion_limit": limit})

            if result.get('status') == 'failed':
                raise TrainingAbortedError(
                    result.get('error_message', 'Training failed'),
                    iteration=result.get('iteration', 0),
                    last_good_scene=result.get('last_good_scene')
                )

            if config.checkpoint_path:
                self.scene_io.save_checkpoint(result['scene'], config.checkpoint_path,
                                              checkpoint_metadata(result, result['iteration']))

        logger.info(f"Training run {run_id} completed after {result['iteration']} iteration(s)")
        return result['scene'], result['metrics']


def train(scene: Scene, views: Sequence[TrainingView], config: TrainConfig) -> Tuple[Scene, List[Dict[str, Any]]]:
    """Fit `scene` to `views`; returns the final scene and the metrics log"""
    return TrainingWorkflow().run(scene, views, config)
