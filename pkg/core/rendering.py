"""
Per-ray rendering of every depth, color and normal channel
"""
from typing import Dict

import numpy as np

from core.depth import expected_depth_batch, initial_depth_batch, median_depth_batch
from core.transmittance import (
    RayBundle,
    composite_color_batch,
    composite_normal_batch,
    compositing_weights,
    gather_bundle,
    residual_transmittance_batch,
    total_transmittance_batch,
)
from models.camera import Camera
from models.config import RenderOptions
from models.gaussian import Scene


def gather_for_rays(scene: Scene, origins: np.ndarray, directions: np.ndarray,
                    options: RenderOptions) -> RayBundle:
    return gather_bundle(scene, origins, directions, alpha_cutoff=options.alpha_cutoff,
                         near=options.near, prefilter_sigmas=options.prefilter_sigmas)


def shade_bundle(bundle: RayBundle, options: RenderOptions) -> Dict[str, np.ndarray]:
    """All render channels for the rays of a gathered bundle, arrays indexed by ray"""
    a, t_star, g_peak = bundle.a, bundle.t_star, bundle.g_peak

    t_init, found = initial_depth_batch(t_star, g_peak)
    t_med, valid = median_depth_batch(a, t_star, g_peak, t_init, found,
                                      r=options.bracket_r, traversals=options.traversals)
    expected, expected_mask = expected_depth_batch(t_star, g_peak)

    residual = np.zeros(bundle.ray_count)
    if valid.any():
        at_median = total_transmittance_batch(a[valid], t_star[valid], g_peak[valid], t_med[valid])
        residual[valid] = np.abs(at_median - 0.5)

    normal, _, raw = composite_normal_batch(g_peak, bundle.normals)
    return {
        'median_depth': t_med,
        'valid_mask': valid,
        'step_median_depth': t_init,
        'step_mask': found,
        'expected_depth': expected,
        'expected_mask': expected_mask,
        'color': composite_color_batch(g_peak, bundle.colors),
        'normal': normal,
        'normal_weight': np.linalg.norm(raw, axis=-1),
        'opacity': 1.0 - residual_transmittance_batch(g_peak),
        'median_residual': residual,
        'weight_sum': compositing_weights(g_peak).sum(axis=-1),
    }


def render_rays(scene: Scene, origins: np.ndarray, directions: np.ndarray,
                options: RenderOptions) -> Dict[str, np.ndarray]:
    return shade_bundle(gather_for_rays(scene, origins, directions, options), options)


def render_row(scene: Scene, camera: Camera, row: int, options: RenderOptions) -> Dict[str, np.ndarray]:
    """One image row; the unit of work of every parallel render"""
    origins, directions = camera.row_rays(row)
    return render_rays(scene, origins, directions, options)
