"""
Training View and Metrics Models
"""
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from models.camera import Camera
from utils.errors import InputValidationError


class TrainingView:
    """
    One posed training image with an optional ground-truth depth map
    """

    def __init__(self, camera: Camera, image: np.ndarray, depth: Optional[np.ndarray] = None,
                 name: Optional[str] = None):
        image = np.asarray(image, dtype=np.float64)
        if image.ndim == 2:
            image = np.repeat(image[..., None], 3, axis=2)
        if image.shape != (camera.height, camera.width, 3):
            raise InputValidationError(
                f"Image shape {image.shape} does not match the {camera.width}x{camera.height} camera"
            )
        if depth is not None:
            depth = np.asarray(depth, dtype=np.float64)
            if depth.shape != (camera.height, camera.width):
                raise InputValidationError(f"Depth shape {depth.shape} does not match the image")
        self.camera = camera
        self.image = image
        self.depth = depth
        self.name = name

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'camera': self.camera.to_dict(),
            'has_depth': self.depth is not None,
        }


class LossBreakdown(BaseModel):
    """Terms of the combined loss averaged over the views of one iteration"""
    total: float
    photometric: float
    normal: float = 0.0
    multiview: float = 0.0
    multiview_photometric: float = 0.0
    multiview_geometric: float = 0.0
    mean_cycle_error: float = 0.0
    multiview_pixels: int = 0
    depth_error: Optional[float] = Field(default=None, description="Mean |t_med - gt| where ground truth exists")


class IterationMetrics(BaseModel):
    """One line of the training metrics log"""
    iteration: int
    views: List[int]
    losses: LossBreakdown
    mean_median_residual: float
    skipped_pixels: int = 0
    gradient_max_abs: float = 0.0
    geometric_active: bool = False
