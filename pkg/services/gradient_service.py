"""
Gradient Service - backward pass from image-space upstream gradients to Gaussians
"""
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from core.gradients import backward_bundle, finalize_gradients
from core.rendering import gather_for_rays
from models.camera import Camera
from models.config import RenderOptions
from models.gaussian import Scene
from models.gradient_buffer import GradientBuffer
from models.render_result import DepthRenderResult, PixelUpstream
from utils.logging_config import get_logger

logger = get_logger('services.gradient')


class GradientService:
    """
    Accumulates dL/dtheta for every Gaussian.

    Each image row owns a partial buffer; partials are reduced in row order and
    views in the order given, so the result is bitwise reproducible for any
    worker count.
    """

    def __init__(self, options: Optional[RenderOptions] = None):
        self.options = options or RenderOptions.from_env()

    def _backward_row(self, scene: Scene, camera: Camera, result: DepthRenderResult,
                      upstream: PixelUpstream, row: int, options: RenderOptions) -> Optional[GradientBuffer]:
        depth_grad = upstream.depth[row]
        color_grad = upstream.color[row]
        normal_grad = upstream.normal[row]
        scale = upstream.consistency_scale[row]
        if not (np.any(depth_grad) or np.any(color_grad) or np.any(normal_grad) or np.any(scale)):
            return None

        origins, directions = camera.row_rays(row)
        bundle = gather_for_rays(scene, origins, directions, options)
        partial = GradientBuffer(len(scene))
        normal_raw = result.normal[row] * result.normal_weight[row][:, None]
        backward_bundle(
            partial, scene, bundle,
            t_med=result.median_depth[row],
            valid=result.valid_mask[row],
            depth_upstream=np.where(result.valid_mask[row], depth_grad, 0.0),
            dcolor=color_grad,
            dnormal=normal_grad,
            normal_raw=normal_raw,
            consistency_target=upstream.consistency_target[row],
            consistency_scale=scale,
        )
        return partial

    def backward_view(self, scene: Scene, camera: Camera, result: DepthRenderResult,
                      upstream: PixelUpstream, options: Optional[RenderOptions] = None) -> GradientBuffer:
        """
        Unfinalized gradient buffer of one view

        Args:
            scene: Scene the view was rendered from
            camera: Camera of the view
            result: Forward render of the view
            upstream: dL/d(channel) images for the view

        Returns:
            GradientBuffer with staged precision gradients still pending
        """
        options = options or self.options
        if upstream.shape != (camera.height, camera.width):
            raise ValueError(f"Upstream shape {upstream.shape} does not match the "
                             f"{camera.height}x{camera.width} camera")
        if upstream.is_zero() or len(scene) == 0:
            return GradientBuffer(len(scene))

        rows = range(camera.height)

        def run(row):
            return self._backward_row(scene, camera, result, upstream, row, options)

        if options.workers <= 1:
            partials: List[Optional[GradientBuffer]] = [run(row) for row in rows]
        else:
            with ThreadPoolExecutor(max_workers=options.workers) as executor:
                partials = list(executor.map(run, rows))

        buffer = GradientBuffer.reduce(len(scene), (p for p in partials if p is not None))
        if buffer.skipped_pixels:
            logger.warning(f"Skipped {buffer.skipped_pixels} pixel(s) with flat transmittance at the median")
        return buffer

    def backward_views(self, scene: Scene, cameras: Sequence[Camera], results: Sequence[DepthRenderResult],
                       upstreams: Sequence[PixelUpstream],
                       options: Optional[RenderOptions] = None) -> GradientBuffer:
        """Sum of every view's gradients, resolved into scale and quaternion gradients"""
        views = [self.backward_view(scene, camera, result, upstream, options)
                 for camera, result, upstream in zip(cameras, results, upstreams)]
        buffer = GradientBuffer.reduce(len(scene), views)
        finalize_gradients(buffer, scene)
        logger.debug(f"Backward pass over {len(views)} view(s): max |grad| {buffer.max_abs():.3e}, "
                     f"{int(buffer.nonzero_gaussians().sum())} Gaussian(s) touched")
        return buffer
