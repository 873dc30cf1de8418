"""
Geometry evaluation: cycle reprojection maps, depth fusion and Chamfer distance
"""
from typing import Iterable, Tuple

import numpy as np
from scipy.spatial import cKDTree

from core.projection import back_project, cycle_transfer
from models.camera import Camera
from models.consistency_report import ConsistencyReport
from utils.errors import InputValidationError


def cycle_reprojection_map(depth_r: np.ndarray, mask_r: np.ndarray, cam_r: Camera,
                           depth_n: np.ndarray, mask_n: np.ndarray, cam_n: Camera) -> ConsistencyReport:
    """Per-pixel cycle reprojection error of a reference depth map against a neighbor"""
    transfer = cycle_transfer(depth_r, mask_r, cam_r, depth_n, mask_n, cam_n)
    errors = np.full(depth_r.shape, np.inf)
    valid = np.zeros(depth_r.shape, dtype=bool)
    errors[transfer.rows, transfer.cols] = transfer.errors
    valid[transfer.rows, transfer.cols] = transfer.valid
    return ConsistencyReport(errors, valid)


def fuse_depths(views: Iterable[Tuple[np.ndarray, np.ndarray, Camera]], voxel_size: float = 0.0) -> np.ndarray:
    """Back-project every valid pixel of every (depth, mask, camera) view into one cloud"""
    clouds = []
    for depth, mask, camera in views:
        points = back_project(np.where(mask, depth, 0.0), camera)
        clouds.append(points[mask])
    cloud = np.concatenate(clouds, axis=0) if clouds else np.zeros((0, 3))
    if voxel_size > 0.0 and len(cloud):
        cloud = voxel_downsample(cloud, voxel_size)
    return cloud


def voxel_downsample(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """Centroid of every occupied voxel, ordered by voxel key"""
    if voxel_size <= 0.0:
        raise InputValidationError(f"Voxel size must be positive, got {voxel_size!r}")
    keys = np.floor(points / voxel_size).astype(np.int64)
    unique, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(unique), 3))
    np.add.at(sums, inverse, points)
    return sums / counts[:, None]


def chamfer(cloud_a: np.ndarray, cloud_b: np.ndarray) -> float:
    """Symmetric mean of unsquared nearest-neighbor distances"""
    cloud_a = np.asarray(cloud_a, dtype=np.float64).reshape(-1, 3)
    cloud_b = np.asarray(cloud_b, dtype=np.float64).reshape(-1, 3)
    if not len(cloud_a) or not len(cloud_b):
        raise InputValidationError("Chamfer distance needs two non-empty clouds")
    a_to_b, _ = cKDTree(cloud_b).query(cloud_a)
    b_to_a, _ = cKDTree(cloud_a).query(cloud_b)
    return 0.5 * float(a_to_b.mean()) + 0.5 * float(b_to_a.mean())
