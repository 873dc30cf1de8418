"""
Gradient Check Report Model
"""
from typing import Dict, List

from pydantic import BaseModel, Field

GRADCHECK_TOLERANCE = 1e-3


class RayGradcheck(BaseModel):
    """Analytic against finite-difference gradients of the median depth of one ray"""
    origin: List[float]
    direction: List[float]
    median_depth: float
    gaussians: List[int]
    max_relative_error: float
    group_errors: Dict[str, float] = Field(default_factory=dict)


class GradcheckReport(BaseModel):
    """Summary of a finite-difference gradient suite"""
    seed: int
    rays: List[RayGradcheck] = Field(default_factory=list)
    skipped_rays: int = 0
    tolerance: float = GRADCHECK_TOLERANCE

    @property
    def max_relative_error(self) -> float:
        return max((ray.max_relative_error for ray in self.rays), default=0.0)

    @property
    def passed(self) -> bool:
        return bool(self.rays) and self.max_relative_error <= self.tolerance
