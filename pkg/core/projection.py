"""
Camera-space geometry shared by the multi-view loss and the consistency metric
"""
from typing import NamedTuple, Tuple

import numpy as np

from models.camera import Camera

MIN_POINT_DEPTH = 1e-12


class BilinearSample(NamedTuple):
    """Bilinear lookups at continuous pixel coordinates (pixel centers at +0.5)"""
    values: np.ndarray
    valid: np.ndarray
    taps: np.ndarray
    weights: np.ndarray
    gradient: np.ndarray


def relative_pose(cam_r: Camera, cam_n: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """(R_rn, T_rn) with x_n = R_rn x_r + T_rn between camera frames"""
    R_rn = cam_n.rotation @ cam_r.rotation.T
    T_rn = cam_n.translation - R_rn @ cam_r.translation
    return R_rn, T_rn


def camera_directions(camera: Camera, pixels: np.ndarray) -> np.ndarray:
    """Unit camera-space ray directions through pixel coordinates"""
    pixels = np.asarray(pixels, dtype=np.float64)
    homogeneous = np.concatenate([pixels, np.ones(pixels.shape[:-1] + (1,))], axis=-1)
    rays = homogeneous @ camera.intrinsics_inv.T
    return rays / np.linalg.norm(rays, axis=-1, keepdims=True)


def camera_direction_jacobian(camera: Camera, pixels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Unit camera-space directions and their derivative w.r.t. pixel coordinates, (P, 3) and (P, 3, 2)"""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    homogeneous = np.concatenate([pixels, np.ones((len(pixels), 1))], axis=-1)
    rays = homogeneous @ camera.intrinsics_inv.T
    norm = np.linalg.norm(rays, axis=-1)
    unit = rays / norm[:, None]
    tangent = (np.eye(3)[None] - np.einsum('pi,pj->pij', unit, unit)) / norm[:, None, None]
    return unit, tangent @ camera.intrinsics_inv[:, :2]


def project_with_jacobian(intrinsics: np.ndarray, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Pixel coordinates of camera-space points, dpixel/dpoint of shape (P, 2, 3), and point depth z
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = points[:, 2]
    safe_z = np.where(np.abs(z) > MIN_POINT_DEPTH, z, 1.0)
    homogeneous = points @ intrinsics.T
    pixels = homogeneous[:, :2] / safe_z[:, None]
    jac = intrinsics[None, :2, :] - pixels[:, :, None] * np.array([0.0, 0.0, 1.0])[None, None, :]
    return pixels, jac / safe_z[:, None, None], z


def bilinear_sample(image: np.ndarray, pixels: np.ndarray, mask: np.ndarray = None) -> BilinearSample:
    """
    Sample an (H, W) image at continuous pixel coordinates of shape (P, 2).

    A sample is valid when all four taps lie inside the image and inside the mask.
    """
    height, width = image.shape[:2]
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    fx = pixels[:, 0] - 0.5
    fy = pixels[:, 1] - 0.5
    inside = (
        np.isfinite(fx) & np.isfinite(fy)
        & (fx >= 0.0) & (fx <= width - 1) & (fy >= 0.0) & (fy <= height - 1)
        & (width > 1) & (height > 1)
    )
    fx = np.where(inside, fx, 0.0)
    fy = np.where(inside, fy, 0.0)
    x0 = np.clip(np.floor(fx).astype(np.int64), 0, max(width - 2, 0))
    y0 = np.clip(np.floor(fy).astype(np.int64), 0, max(height - 2, 0))
    wx = fx - x0
    wy = fy - y0
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)

    taps = np.stack([y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1], axis=1)
    weights = np.stack([(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy], axis=1)

    flat = image.reshape(-1)
    valid = inside.copy()
    if mask is not None:
        valid &= np.all(mask.reshape(-1)[taps], axis=1)
    corner = np.where(valid[:, None], flat[taps], 0.0)
    values = np.sum(weights * corner, axis=1)
    gradient = np.stack([
        (1 - wy) * (corner[:, 1] - corner[:, 0]) + wy * (corner[:, 3] - corner[:, 2]),
        (1 - wx) * (corner[:, 2] - corner[:, 0]) + wx * (corner[:, 3] - corner[:, 1]),
    ], axis=1)
    return BilinearSample(values=values, valid=valid, taps=taps, weights=weights, gradient=gradient)


def back_project(depth: np.ndarray, camera: Camera) -> np.ndarray:
    """World points C + t * w for a depth image of ray parameters, shape (H, W, 3)"""
    directions = camera.pixel_directions(camera.pixel_grid())
    return camera.center + depth[..., None] * directions


class CycleTransfer(NamedTuple):
    """
    Reference pixels carried to the neighbor view and back, one entry per
    reference pixel that was tested. `valid` marks entries with a full round trip.
    """
    rows: np.ndarray
    cols: np.ndarray
    pixels: np.ndarray
    depth: np.ndarray
    ref_dirs: np.ndarray
    nbr_pixels: np.ndarray
    nbr_jacobian: np.ndarray
    sample: BilinearSample
    nbr_dirs: np.ndarray
    nbr_dir_jacobian: np.ndarray
    back_pixels: np.ndarray
    back_jacobian: np.ndarray
    errors: np.ndarray
    valid: np.ndarray


def cycle_transfer(depth_r: np.ndarray, mask_r: np.ndarray, cam_r: Camera,
                   depth_n: np.ndarray, mask_n: np.ndarray, cam_n: Camera) -> CycleTransfer:
    """
    Back-project every valid reference pixel, project into the neighbor,
    sample the neighbor depth bilinearly, back-project and reproject into the
    reference. The error is the pixel distance to the start.
    """
    rows, cols = np.nonzero(mask_r)
    pixels = np.stack([cols + 0.5, rows + 0.5], axis=1).astype(np.float64)
    depth = depth_r[rows, cols].astype(np.float64)
    R_rn, T_rn = relative_pose(cam_r, cam_n)
    R_nr, T_nr = relative_pose(cam_n, cam_r)

    ref_dirs = camera_directions(cam_r, pixels)
    in_nbr = (depth[:, None] * ref_dirs) @ R_rn.T + T_rn
    nbr_pixels, nbr_jacobian, z_n = project_with_jacobian(cam_n.intrinsics, in_nbr)
    ahead = z_n > MIN_POINT_DEPTH

    sample = bilinear_sample(depth_n, np.where(ahead[:, None], nbr_pixels, -1.0), mask_n)
    nbr_dirs, nbr_dir_jacobian = camera_direction_jacobian(cam_n, np.where(sample.valid[:, None], nbr_pixels, 0.5))
    back = (sample.values[:, None] * nbr_dirs) @ R_nr.T + T_nr
    back_pixels, back_jacobian, z_r = project_with_jacobian(cam_r.intrinsics, back)

    valid = ahead & sample.valid & (z_r > MIN_POINT_DEPTH)
    errors = np.where(valid, np.linalg.norm(back_pixels - pixels, axis=1), np.inf)
    return CycleTransfer(
        rows=rows, cols=cols, pixels=pixels, depth=depth, ref_dirs=ref_dirs,
        nbr_pixels=nbr_pixels, nbr_jacobian=nbr_jacobian, sample=sample,
        nbr_dirs=nbr_dirs, nbr_dir_jacobian=nbr_dir_jacobian,
        back_pixels=back_pixels, back_jacobian=back_jacobian,
        errors=errors, valid=valid,
    )


def cycle_backward(transfer: CycleTransfer, cam_r: Camera, cam_n: Camera,
                   derror: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradients of sum(derror * error) w.r.t. the reference depth of each entry
    and the four neighbor depth taps, shapes (P,) and (P, 4)
    """
    R_rn, _ = relative_pose(cam_r, cam_n)
    R_nr, _ = relative_pose(cam_n, cam_r)
    active = transfer.valid & (derror != 0.0) & (transfer.errors > 0.0)
    count = len(transfer.depth)
    ddepth = np.zeros(count)
    dtaps = np.zeros((count, 4))
    if not active.any():
        return ddepth, dtaps

    offset = transfer.back_pixels - transfer.pixels
    safe = np.where(active, transfer.errors, 1.0)
    dback = np.where(active[:, None], offset / safe[:, None], 0.0) * derror[:, None]

    # error <- back pixel <- neighbor camera point
    dpoint = np.einsum('pk,pkj->pj', dback, transfer.back_jacobian) @ R_nr
    t_n = transfer.sample.values
    dsampled = np.sum(dpoint * transfer.nbr_dirs, axis=1)
    ddir = t_n[:, None] * dpoint
    dnbr_pixel = dsampled[:, None] * transfer.sample.gradient + np.einsum('pj,pjk->pk', ddir, transfer.nbr_dir_jacobian)

    # neighbor pixel <- reference depth
    dref_point = np.einsum('pk,pkj->pj', dnbr_pixel, transfer.nbr_jacobian) @ R_rn
    ddepth = np.where(active, np.sum(dref_point * transfer.ref_dirs, axis=1), 0.0)
    dtaps = np.where(active[:, None], dsampled[:, None] * transfer.sample.weights, 0.0)
    return ddepth, dtaps
