"""
Evaluation Service - consistency reports, fused clouds and Chamfer distance
"""
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from core.evaluation import chamfer, cycle_reprojection_map, fuse_depths
from core.geometry import scene_vacancy
from core.projection import back_project
from models.camera import Camera
from models.consistency_report import ConsistencyReport
from models.gaussian import Scene
from models.render_result import DEPTH_MODES, DepthRenderResult
from utils.logging_config import get_logger

logger = get_logger('services.evaluation')


class EvaluationService:
    """
    Quantitative evaluation of rendered geometry
    """

    def consistency(self, result_r: DepthRenderResult, cam_r: Camera,
                    result_n: DepthRenderResult, cam_n: Camera, mode: str = 'stochastic') -> ConsistencyReport:
        depth_r, mask_r = result_r.depth(mode)
        depth_n, mask_n = result_n.depth(mode)
        report = cycle_reprojection_map(depth_r, mask_r, cam_r, depth_n, mask_n, cam_n)
        logger.info(f"Cycle reprojection ({mode}): mean {report.mean_error:.4f} px over "
                    f"{report.valid_fraction:.1%} of pixels")
        return report

    def consistency_by_mode(self, result_r: DepthRenderResult, cam_r: Camera,
                            result_n: DepthRenderResult, cam_n: Camera,
                            modes: Sequence[str] = DEPTH_MODES) -> Dict[str, ConsistencyReport]:
        """The same pair evaluated with every depth mode"""
        return {mode: self.consistency(result_r, cam_r, result_n, cam_n, mode) for mode in modes}

    def fuse(self, views: Iterable[Tuple[DepthRenderResult, Camera]], mode: str = 'stochastic',
             voxel_size: float = 0.0) -> np.ndarray:
        triples = [(*result.depth(mode), camera) for result, camera in views]
        cloud = fuse_depths(triples, voxel_size)
        logger.info(f"Fused {len(triples)} view(s) into {len(cloud)} point(s)")
        return cloud

    def fuse_depth_maps(self, maps: Iterable[Tuple[np.ndarray, np.ndarray, Camera]],
                        voxel_size: float = 0.0) -> np.ndarray:
        return fuse_depths(list(maps), voxel_size)

    def chamfer(self, cloud_a: np.ndarray, cloud_b: np.ndarray) -> float:
        distance = chamfer(cloud_a, cloud_b)
        logger.info(f"Chamfer distance {distance:.6f} ({len(cloud_a)} vs {len(cloud_b)} points)")
        return distance

    def isosurface_deviation(self, scene: Scene, results: Sequence[DepthRenderResult],
                             cameras: Sequence[Camera]) -> List[np.ndarray]:
        """
        |prod_i v_i(x) - 0.5| at the back-projected median-depth points of every view
        """
        deviations = []
        for result, camera in zip(results, cameras):
            mask = result.valid_mask
            points = back_project(np.where(mask, result.median_depth, 0.0), camera)[mask]
            deviations.append(np.abs(scene_vacancy(scene, points) - 0.5))
        return deviations
