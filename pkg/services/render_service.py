"""
Render Service - rasterizes every channel of a view, one image row per task
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.rendering import render_row
from core.transmittance import build_profile
from models.camera import Camera
from models.config import RenderOptions
from models.gaussian import Scene
from models.render_result import DepthRenderResult
from models.restriction import TransmittanceProfile
from utils.logging_config import get_logger

logger = get_logger('services.render')

_ROW_CHANNELS = ('median_depth', 'valid_mask', 'step_median_depth', 'step_mask',
                 'expected_depth', 'expected_mask', 'color', 'normal', 'normal_weight',
                 'opacity', 'median_residual', 'weight_sum')


class RenderService:
    """
    Renders depth, color and normal images of a scene.

    Rows are rendered by a thread pool and stacked in row order. Every row runs
    the same numpy code whatever the worker count, so the output does not
    depend on it.
    """

    def __init__(self, options: Optional[RenderOptions] = None):
        self.options = options or RenderOptions.from_env()

    def _rows(self, scene: Scene, camera: Camera, options: RenderOptions) -> List[Dict[str, np.ndarray]]:
        rows = range(camera.height)
        if options.workers <= 1 or camera.height <= 1:
            return [render_row(scene, camera, row, options) for row in rows]
        with ThreadPoolExecutor(max_workers=options.workers) as executor:
            return list(executor.map(lambda row: render_row(scene, camera, row, options), rows))

    def render_channels(self, scene: Scene, camera: Camera,
                        options: Optional[RenderOptions] = None) -> Dict[str, np.ndarray]:
        """Raw per-pixel channels, including the compositing weight sum"""
        options = options or self.options
        rows = self._rows(scene, camera, options)
        return {name: np.stack([row[name] for row in rows]) for name in _ROW_CHANNELS}

    def render_view(self, scene: Scene, camera: Camera,
                    options: Optional[RenderOptions] = None) -> DepthRenderResult:
        """
        Render one view

        Args:
            scene: Gaussians to render
            camera: Viewpoint
            options: Search and culling options, the service defaults when omitted

        Returns:
            DepthRenderResult with every depth mode and its mask
        """
        options = options or self.options
        logger.debug(f"Rendering {camera.width}x{camera.height} view of {len(scene)} Gaussians "
                     f"with {options.workers} worker(s)")
        if len(scene) == 0:
            return DepthRenderResult.background(camera.height, camera.width)

        channels = self.render_channels(scene, camera, options)
        result = DepthRenderResult(
            median_depth=channels['median_depth'],
            valid_mask=channels['valid_mask'],
            expected_depth=channels['expected_depth'],
            step_median_depth=channels['step_median_depth'],
            color=channels['color'],
            normal=channels['normal'],
            expected_mask=channels['expected_mask'],
            step_mask=channels['step_mask'],
            opacity=channels['opacity'],
            median_residual=channels['median_residual'],
            normal_weight=channels['normal_weight'],
            weight_sum=channels['weight_sum'],
        )

        invalid = camera.height * camera.width - int(result.valid_mask.sum())
        if invalid:
            logger.debug(f"{invalid} pixel(s) have no median depth")
        return result

    def render_views(self, scene: Scene, cameras: Sequence[Camera],
                     options: Optional[RenderOptions] = None) -> List[DepthRenderResult]:
        logger.info(f"Rendering {len(cameras)} view(s)")
        return [self.render_view(scene, camera, options) for camera in cameras]

    def pixel_profile(self, scene: Scene, camera: Camera, x: int, y: int,
                      options: Optional[RenderOptions] = None) -> TransmittanceProfile:
        """Transmittance profile of the ray through the center of pixel (x, y)"""
        options = options or self.options
        return build_profile(scene, camera.ray(x + 0.5, y + 0.5), alpha_cutoff=options.alpha_cutoff,
                             near=options.near, prefilter_sigmas=options.prefilter_sigmas)
