"""
Depth Render Result Model
"""
from typing import Dict, Any, Tuple

import numpy as np

# Background pixels carry this depth; the masks are authoritative
SENTINEL_DEPTH = float(np.finfo(np.float64).max)

DEPTH_MODES = ('stochastic', 'step', 'expected')


class DepthRenderResult:
    """
    Every per-pixel channel produced by rendering one view
    """

    def __init__(self, median_depth: np.ndarray, valid_mask: np.ndarray,
                 expected_depth: np.ndarray, step_median_depth: np.ndarray,
                 color: np.ndarray, normal: np.ndarray,
                 expected_mask: np.ndarray = None, step_mask: np.ndarray = None,
                 opacity: np.ndarray = None, median_residual: np.ndarray = None,
                 normal_weight: np.ndarray = None, weight_sum: np.ndarray = None):
        self.median_depth = median_depth
        self.valid_mask = valid_mask
        self.expected_depth = expected_depth
        self.step_median_depth = step_median_depth
        self.color = color
        self.normal = normal

        height, width = median_depth.shape
        self.expected_mask = expected_mask if expected_mask is not None else expected_depth != SENTINEL_DEPTH
        self.step_mask = step_mask if step_mask is not None else step_median_depth != SENTINEL_DEPTH
        self.opacity = opacity if opacity is not None else np.zeros((height, width))
        self.median_residual = median_residual if median_residual is not None else np.zeros((height, width))
        # length of the unnormalized composite normal
        self.normal_weight = normal_weight if normal_weight is not None else np.zeros((height, width))
        self.weight_sum = weight_sum if weight_sum is not None else np.zeros((height, width))

    @property
    def height(self) -> int:
        return self.median_depth.shape[0]

    @property
    def width(self) -> int:
        return self.median_depth.shape[1]

    @classmethod
    def background(cls, height: int, width: int) -> 'DepthRenderResult':
        depth = np.full((height, width), SENTINEL_DEPTH)
        mask = np.zeros((height, width), dtype=bool)
        return cls(
            median_depth=depth.copy(),
            valid_mask=mask.copy(),
            expected_depth=depth.copy(),
            step_median_depth=depth.copy(),
            color=np.zeros((height, width, 3)),
            normal=np.zeros((height, width, 3)),
            expected_mask=mask.copy(),
            step_mask=mask.copy(),
        )

    def depth(self, mode: str = 'stochastic') -> Tuple[np.ndarray, np.ndarray]:
        """Depth channel and its mask for a depth mode"""
        if mode == 'stochastic':
            return self.median_depth, self.valid_mask
        if mode == 'step':
            return self.step_median_depth, self.step_mask
        if mode == 'expected':
            return self.expected_depth, self.expected_mask
        raise ValueError(f"Unknown depth mode {mode!r}, expected one of {DEPTH_MODES}")

    def channels(self) -> Dict[str, np.ndarray]:
        return {
            'median_depth': self.median_depth,
            'valid_mask': self.valid_mask,
            'expected_depth': self.expected_depth,
            'expected_mask': self.expected_mask,
            'step_median_depth': self.step_median_depth,
            'step_mask': self.step_mask,
            'color': self.color,
            'normal': self.normal,
            'opacity': self.opacity,
            'median_residual': self.median_residual,
            'normal_weight': self.normal_weight,
            'weight_sum': self.weight_sum,
        }

    def summary(self) -> Dict[str, Any]:
        valid = self.valid_mask
        return {
            'height': self.height,
            'width': self.width,
            'valid_pixels': int(valid.sum()),
            'mean_median_residual': float(self.median_residual[valid].mean()) if valid.any() else 0.0,
        }


class PixelUpstream:
    """
    Image-space loss gradients for one rendered view.

    color/depth/normal hold dL/d(channel). The normal-consistency term
    sum_i w_i (1 - n_i . target) enters through `consistency_target` and the
    per-pixel `consistency_scale`, because it depends on every Gaussian weight
    along the ray rather than on a rendered channel.
    """

    def __init__(self, height: int, width: int):
        self.color = np.zeros((height, width, 3))
        self.depth = np.zeros((height, width))
        self.normal = np.zeros((height, width, 3))
        self.consistency_target = np.zeros((height, width, 3))
        self.consistency_scale = np.zeros((height, width))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.depth.shape

    def is_zero(self) -> bool:
        return not (np.any(self.color) or np.any(self.depth) or np.any(self.normal)
                    or np.any(self.consistency_scale))
