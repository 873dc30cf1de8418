"""
Loss Service - combined training loss and its image-space gradients
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.losses import (
    depth_to_normal,
    depth_to_normal_backward,
    multiview_loss,
    normal_consistency_image,
    photometric_loss_with_gradient,
)
from models.camera import Camera
from models.config import LossWeights
from models.render_result import DepthRenderResult, PixelUpstream
from models.training import LossBreakdown, TrainingView
from utils.errors import NumericalError
from utils.logging_config import get_logger

logger = get_logger('services.loss')


def nearest_neighbor_views(cameras: Sequence[Camera]) -> List[Optional[int]]:
    """Index of the camera with the closest center for every camera, None when alone"""
    centers = np.stack([camera.center for camera in cameras]) if cameras else np.zeros((0, 3))
    neighbors: List[Optional[int]] = []
    for index in range(len(cameras)):
        distance = np.linalg.norm(centers - centers[index], axis=1)
        distance[index] = np.inf
        neighbors.append(int(np.argmin(distance)) if len(cameras) > 1 else None)
    return neighbors


class LossService:
    """
    Evaluates L = L_c + w_n L_n + L_mv over a set of rendered views.

    The normal and multi-view terms only run when `geometric` is set. Every
    term is averaged over the views and differentiated into one PixelUpstream
    per view.
    """

    def __init__(self, weights: Optional[LossWeights] = None, patch_size: int = 7):
        self.weights = weights or LossWeights()
        self.patch_size = patch_size

    def photometric_term(self, result: DepthRenderResult, view: TrainingView,
                         upstream: PixelUpstream, scale: float) -> float:
        value, grad = photometric_loss_with_gradient(result.color, view.image, self.weights.ssim_lambda)
        upstream.color += scale * grad
        return value

    def normal_term(self, result: DepthRenderResult, camera: Camera,
                    upstream: PixelUpstream, scale: float) -> float:
        """Rendered normals against normals of the median depth map"""
        depth = result.median_depth
        mask = result.valid_mask
        depth_normal, normal_valid = depth_to_normal(depth, mask, camera)
        normal_raw = result.normal * result.normal_weight[..., None]
        consistency = normal_consistency_image(result.weight_sum, normal_raw, depth_normal, normal_valid & mask)
        if consistency.pixels == 0:
            return 0.0

        weight = scale * self.weights.normal
        upstream.consistency_target += consistency.target
        upstream.consistency_scale += weight * consistency.scale
        upstream.depth += depth_to_normal_backward(depth, mask, camera, weight * consistency.ddepth_normal)
        return consistency.value

    def evaluate(self, views: Sequence[TrainingView], results: Sequence[DepthRenderResult],
                 geometric: bool = False) -> Tuple[LossBreakdown, List[PixelUpstream]]:
        """
        Loss terms and upstream gradients for rendered views

        Args:
            views: Training views, in render order
            results: Forward renders of the views
            geometric: Whether the normal and multi-view terms are active

        Returns:
            Tuple of the loss breakdown and one PixelUpstream per view
        """
        count = len(views)
        scale = 1.0 / count
        upstreams = [PixelUpstream(v.camera.height, v.camera.width) for v in views]

        photometric = sum(self.photometric_term(r, v, u, scale) for r, v, u in zip(results, views, upstreams)) * scale
        normal = 0.0
        mv_photo, mv_geo, mv_total, cycle_errors, used = 0.0, 0.0, 0.0, [], 0

        if geometric:
            normal = sum(self.normal_term(r, v.camera, u, scale) for r, v, u in zip(results, views, upstreams)) * scale

            neighbors = nearest_neighbor_views([v.camera for v in views])
            if count < 2:
                logger.warning("Multi-view loss needs at least two views; skipping it")
            for ref, nbr in enumerate(neighbors):
                if nbr is None:
                    continue
                mv = multiview_loss(
                    views[ref].camera, views[nbr].camera, views[ref].image, views[nbr].image,
                    results[ref].median_depth, results[ref].valid_mask, results[ref].normal,
                    results[nbr].median_depth, results[nbr].valid_mask,
                    weights=self.weights, patch_size=self.patch_size,
                )
                mv_total += scale * mv.value
                mv_photo += scale * mv.photometric
                mv_geo += scale * mv.geometric
                used += mv.used_pixels
                if mv.used_pixels:
                    cycle_errors.append(mv.mean_cycle_error)
                upstreams[ref].depth += scale * mv.grad_depth_r
                upstreams[ref].normal += scale * mv.grad_normal_r
                upstreams[nbr].depth += scale * mv.grad_depth_n

        total = photometric + self.weights.normal * normal + mv_total
        if not np.isfinite(total):
            raise NumericalError(f"Training loss is not finite ({total})")

        breakdown = LossBreakdown(
            total=total,
            photometric=photometric,
            normal=normal,
            multiview=mv_total,
            multiview_photometric=mv_photo,
            multiview_geometric=mv_geo,
            mean_cycle_error=float(np.mean(cycle_errors)) if cycle_errors else 0.0,
            multiview_pixels=used,
            depth_error=self.depth_error(views, results),
        )
        logger.debug(f"Loss {total:.6f} (photometric {photometric:.6f}, normal {normal:.6f}, "
                     f"multi-view {mv_total:.6f} over {used} pixel(s))")
        return breakdown, upstreams

    @staticmethod
    def depth_error(views: Sequence[TrainingView], results: Sequence[DepthRenderResult]) -> Optional[float]:
        errors = []
        for view, result in zip(views, results):
            if view.depth is None:
                continue
            known = result.valid_mask & np.isfinite(view.depth)
            if known.any():
                errors.append(np.abs(result.median_depth[known] - view.depth[known]))
        return float(np.concatenate(errors).mean()) if errors else None
