"""
Shared training state definition for all agents
"""
from typing import Any, Dict, List, TypedDict

from models.gaussian import Scene
from models.gradient_buffer import GradientBuffer
from models.render_result import DepthRenderResult, PixelUpstream
from models.training import LossBreakdown


class TrainingState(TypedDict, total=False):
    """State for one pass through the optimization loop"""
    current_step: str
    status: str
    iteration: int
    scene: Scene
    last_good_scene: Scene
    view_indices: List[int]
    results: List[DepthRenderResult]
    losses: LossBreakdown
    upstreams: List[PixelUpstream]
    gradients: GradientBuffer
    metrics: List[Dict[str, Any]]
    error_message: str
