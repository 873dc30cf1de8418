"""
Training losses with their analytic image-space gradients
"""
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.ndimage import correlate1d

from core.projection import (
    bilinear_sample,
    back_project,
    cycle_backward,
    cycle_transfer,
    project_with_jacobian,
    relative_pose,
)
from core.transmittance import compositing_weights
from models.camera import Camera
from models.config import LossWeights
from models.homography import Homography
from models.restriction import TransmittanceProfile
from utils.errors import DegeneratePlaneError, InputValidationError
from utils.logging_config import get_logger

logger = get_logger('core.losses')

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
MIN_PLANE_OFFSET = 1e-9
MIN_PATCH_VARIANCE = 1e-10
MIN_CROSS_NORM = 1e-12
LUMINANCE = np.array([0.299, 0.587, 0.114])


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1D Gaussian kernel; the 2D window is its outer product"""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    kernel = np.exp(-x * x / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _window_filter(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # zero padding; with a symmetric kernel this filter is its own adjoint
    out = correlate1d(image, kernel, axis=0, mode='constant', cval=0.0)
    return correlate1d(out, kernel, axis=1, mode='constant', cval=0.0)


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    value, _ = ssim_with_gradient(x, y)
    return value


def ssim_with_gradient(x: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean SSIM over pixels and channels and its gradient w.r.t. x.

    With A1 = 2 mu_x mu_y + C1, A2 = 2 s_xy + C2, B1 = mu_x^2 + mu_y^2 + C1 and
    B2 = s_x^2 + s_y^2 + C2 the map is A1 A2 / (B1 B2); the gradient goes
    through mu_x, E[x^2] and E[xy] of every window touching a pixel.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    kernel = gaussian_window()

    mu_x = _window_filter(x, kernel)
    mu_y = _window_filter(y, kernel)
    var_x = _window_filter(x * x, kernel) - mu_x * mu_x
    var_y = _window_filter(y * y, kernel) - mu_y * mu_y
    cov = _window_filter(x * y, kernel) - mu_x * mu_y

    A1 = 2.0 * mu_x * mu_y + SSIM_C1
    A2 = 2.0 * cov + SSIM_C2
    B1 = mu_x * mu_x + mu_y * mu_y + SSIM_C1
    B2 = var_x + var_y + SSIM_C2
    S = A1 * A2 / (B1 * B2)

    d_var = -S / B2
    d_cov = 2.0 * A1 / (B1 * B2)
    d_mu = 2.0 * mu_y * A2 / (B1 * B2) - S * 2.0 * mu_x / B1 - 2.0 * mu_x * d_var - mu_y * d_cov

    n = S.size
    grad = (
        _window_filter(d_mu, kernel)
        + 2.0 * x * _window_filter(d_var, kernel)
        + y * _window_filter(d_cov, kernel)
    ) / n
    return float(S.mean()), grad


def photometric_loss_with_gradient(rendered: np.ndarray, reference: np.ndarray,
                                   ssim_lambda: float = 0.2) -> Tuple[float, np.ndarray]:
    """(1 - lambda) L1 + lambda (1 - SSIM) / 2 and its gradient w.r.t. the rendered image"""
    rendered = np.asarray(rendered, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if rendered.shape != reference.shape:
        raise InputValidationError(f"Image shapes differ: {rendered.shape} vs {reference.shape}")

    diff = rendered - reference
    l1 = float(np.abs(diff).mean())
    ssim_value, ssim_grad = ssim_with_gradient(rendered, reference)
    value = (1.0 - ssim_lambda) * l1 + ssim_lambda * (1.0 - ssim_value) / 2.0
    grad = (1.0 - ssim_lambda) * np.sign(diff) / diff.size - ssim_lambda * 0.5 * ssim_grad
    return value, grad


def photometric_loss(rendered: np.ndarray, reference: np.ndarray, ssim_lambda: float = 0.2) -> float:
    value, _ = photometric_loss_with_gradient(rendered, reference, ssim_lambda)
    return value


def normal_consistency_loss(profile: TransmittanceProfile, depth_normal) -> float:
    """sum_i w_i (1 - n_i . depth_normal) over the profile's compositing weights"""
    if not len(profile):
        return 0.0
    weights = compositing_weights(profile.g_peak)
    agreement = profile.normals @ np.asarray(depth_normal, dtype=np.float64)
    return float(np.sum(weights * (1.0 - agreement)))


class NormalConsistencyResult(NamedTuple):
    value: float
    scale: np.ndarray
    target: np.ndarray
    ddepth_normal: np.ndarray
    pixels: int


def normal_consistency_image(weight_sum: np.ndarray, normal_raw: np.ndarray, depth_normal: np.ndarray,
                             valid: np.ndarray) -> NormalConsistencyResult:
    """
    Image form of the normal loss averaged over valid pixels.

    Per pixel sum_i w_i (1 - n_i . target) = W - N_raw . target, where W is the
    weight sum and N_raw the unnormalized composite normal.
    """
    count = int(valid.sum())
    scale = np.where(valid, 1.0 / max(count, 1), 0.0)
    target = np.where(valid[..., None], depth_normal, 0.0)
    per_pixel = weight_sum - np.sum(normal_raw * target, axis=-1)
    value = float(np.sum(scale * per_pixel))
    return NormalConsistencyResult(
        value=value,
        scale=scale,
        target=target,
        ddepth_normal=-scale[..., None] * normal_raw,
        pixels=count,
    )


def _depth_normal_terms(depth: np.ndarray, mask: np.ndarray, camera: Camera):
    safe = np.where(mask, depth, 0.0)
    points = back_project(safe, camera)
    base = points[:-1, :-1]
    a = points[:-1, 1:] - base
    b = points[1:, :-1] - base
    cross = np.cross(a, b)
    norm = np.linalg.norm(cross, axis=-1)
    ok = mask[:-1, :-1] & mask[:-1, 1:] & mask[1:, :-1] & (norm > MIN_CROSS_NORM)
    unit = cross / np.where(ok, norm, 1.0)[..., None]
    sign = np.where(np.sum(unit * (base - camera.center), axis=-1) > 0.0, -1.0, 1.0)
    return a, b, norm, unit, sign, ok


def depth_to_normal(depth: np.ndarray, mask: np.ndarray, camera: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """
    Normals from finite differences of the back-projected depth map.

    Uses the +x and +y neighbors, oriented toward the camera. The last row and
    column, and pixels with a masked neighbor, are invalid.
    """
    height, width = depth.shape
    normals = np.zeros((height, width, 3))
    valid = np.zeros((height, width), dtype=bool)
    if height < 2 or width < 2:
        return normals, valid
    _, _, _, unit, sign, ok = _depth_normal_terms(depth, mask, camera)
    normals[:-1, :-1] = np.where(ok[..., None], unit * sign[..., None], 0.0)
    valid[:-1, :-1] = ok
    return normals, valid


def depth_to_normal_backward(depth: np.ndarray, mask: np.ndarray, camera: Camera,
                             dnormals: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the depth map given dL/d(normal image)"""
    height, width = depth.shape
    ddepth = np.zeros((height, width))
    if height < 2 or width < 2:
        return ddepth
    a, b, norm, unit, sign, ok = _depth_normal_terms(depth, mask, camera)
    dn = np.where(ok[..., None], dnormals[:-1, :-1] * sign[..., None], 0.0)
    dcross = (dn - np.sum(dn * unit, axis=-1, keepdims=True) * unit) / np.where(ok, norm, 1.0)[..., None]
    da = np.cross(b, dcross)
    db = np.cross(dcross, a)

    dpoints = np.zeros((height, width, 3))
    dpoints[:-1, 1:] += da
    dpoints[1:, :-1] += db
    dpoints[:-1, :-1] -= da + db
    directions = camera.pixel_directions(camera.pixel_grid())
    return np.sum(dpoints * directions, axis=-1)


def plane_homography(K_r: np.ndarray, K_n: np.ndarray, R_rn: np.ndarray, T_rn: np.ndarray,
                     n_r, p_r) -> Homography:
    """H = K_n (R_rn + T_rn n_r^T / (p_r^T n_r)) K_r^-1 for the plane through p_r with normal n_r"""
    n_r = np.asarray(n_r, dtype=np.float64)
    offset = float(np.dot(np.asarray(p_r, dtype=np.float64), n_r))
    if abs(offset) < MIN_PLANE_OFFSET:
        raise DegeneratePlaneError(f"Plane passes through the reference camera center (p.n = {offset:.3e})")
    K_r = np.asarray(K_r, dtype=np.float64)
    matrix = np.asarray(K_n) @ (np.asarray(R_rn) + np.outer(T_rn, n_r) / offset) @ np.linalg.inv(K_r)
    return Homography(matrix)


def cycle_error(u_r, H_rn: Homography, H_nr: Homography) -> float:
    """Pixel distance after warping to the neighbor and back; +inf when a warp leaves the plane at infinity"""
    u_r = np.asarray(u_r, dtype=np.float64)
    forward = H_rn.apply(u_r)
    if not np.all(np.isfinite(forward)):
        return float('inf')
    back = H_nr.apply(forward)
    if not np.all(np.isfinite(back)):
        return float('inf')
    return float(np.linalg.norm(u_r - back))


def confidence_weight(phi):
    """exp(-phi) below one pixel of cycle error, zero from there on"""
    phi = np.asarray(phi, dtype=np.float64)
    with np.errstate(over='ignore', invalid='ignore'):
        weight = np.where(phi < 1.0, np.exp(-np.where(phi < 1.0, phi, 0.0)), 0.0)
    return float(weight) if weight.ndim == 0 else weight


def ncc(patch_a, patch_b) -> Optional[float]:
    """Normalized cross-correlation, None when either patch has variance below 1e-10"""
    a = np.asarray(patch_a, dtype=np.float64).ravel()
    b = np.asarray(patch_b, dtype=np.float64).ravel()
    if a.var() < MIN_PATCH_VARIANCE or b.var() < MIN_PATCH_VARIANCE:
        return None
    a = a - a.mean()
    b = b - b.mean()
    return float(np.clip(a @ b / np.sqrt((a @ a) * (b @ b)), -1.0, 1.0))


def to_gray(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    return image if image.ndim == 2 else image[..., :3] @ LUMINANCE


class MultiViewResult(NamedTuple):
    value: float
    photometric: float
    geometric: float
    used_pixels: int
    mean_cycle_error: float
    weights: np.ndarray
    errors: np.ndarray
    grad_depth_r: np.ndarray
    grad_normal_r: np.ndarray
    grad_depth_n: np.ndarray


def multiview_loss(cam_r: Camera, cam_n: Camera, image_r: np.ndarray, image_n: np.ndarray,
                   depth_r: np.ndarray, mask_r: np.ndarray, normal_r: np.ndarray,
                   depth_n: np.ndarray, mask_n: np.ndarray,
                   weights: LossWeights = LossWeights(), patch_size: int = 7,
                   frozen_weights: Optional[np.ndarray] = None) -> MultiViewResult:
    """
    w_pc * mean w (1 - NCC) + w_gc * mean w phi over the used reference pixels.

    NCC compares the reference patch with the neighbor image warped by the
    plane homography of the pixel's depth and normal. phi is the cycle
    reprojection error through the neighbor depth, w = confidence_weight(phi)
    is held constant for gradients, and `frozen_weights` replaces it outright.
    A pixel is used when its round trip is valid, its plane does not pass
    through the camera, its patch fits both images, and neither patch is flat.
    """
    height, width = depth_r.shape
    gray_r = to_gray(image_r)
    gray_n = to_gray(image_n)
    grad_depth_r = np.zeros((height, width))
    grad_normal_r = np.zeros((height, width, 3))
    grad_depth_n = np.zeros(depth_n.shape)
    weight_map = np.zeros((height, width))
    error_map = np.full((height, width), np.inf)

    transfer = cycle_transfer(depth_r, mask_r, cam_r, depth_n, mask_n, cam_n)
    rows, cols = transfer.rows, transfer.cols
    error_map[rows, cols] = transfer.errors

    R_rn, T_rn = relative_pose(cam_r, cam_n)
    half = patch_size // 2
    dy, dx = np.meshgrid(np.arange(-half, half + 1), np.arange(-half, half + 1), indexing='ij')
    dy, dx = dy.ravel(), dx.ravel()

    patch_rows = rows[:, None] + dy[None, :]
    patch_cols = cols[:, None] + dx[None, :]
    inside_r = np.all((patch_rows >= 0) & (patch_rows < height) & (patch_cols >= 0) & (patch_cols < width), axis=1)
    ref_patch = gray_r[np.clip(patch_rows, 0, height - 1), np.clip(patch_cols, 0, width - 1)]

    normal_c = normal_r[rows, cols] @ cam_r.rotation.T
    offset = transfer.depth * np.sum(normal_c * transfer.ref_dirs, axis=1)
    planar = np.abs(offset) >= MIN_PLANE_OFFSET
    safe_offset = np.where(planar, offset, 1.0)

    patch_pixels = np.stack([patch_cols + 0.5, patch_rows + 0.5], axis=-1)
    rays = np.concatenate([patch_pixels, np.ones(patch_pixels.shape[:-1] + (1,))], axis=-1) @ cam_r.intrinsics_inv.T
    rho = np.einsum('pki,pi->pk', rays, normal_c) / safe_offset[:, None]
    warped = rays @ R_rn.T + rho[:, :, None] * T_rn
    nbr_pixels, nbr_jac, z = project_with_jacobian(cam_n.intrinsics, warped.reshape(-1, 3))
    sample = bilinear_sample(gray_n, np.where((z > 0)[:, None], nbr_pixels, -1.0))
    patches = len(rows)
    nbr_patch = sample.values.reshape(patches, -1)
    nbr_ok = np.all(sample.valid.reshape(patches, -1), axis=1)

    a_c = ref_patch - ref_patch.mean(axis=1, keepdims=True)
    b_c = nbr_patch - nbr_patch.mean(axis=1, keepdims=True)
    var_a = np.mean(a_c * a_c, axis=1)
    var_b = np.mean(b_c * b_c, axis=1)
    textured = (var_a >= MIN_PATCH_VARIANCE) & (var_b >= MIN_PATCH_VARIANCE)

    used = transfer.valid & inside_r & planar & nbr_ok & textured
    count = int(used.sum())
    if count == 0:
        logger.warning("Multi-view loss found no usable pixels")
        return MultiViewResult(0.0, 0.0, 0.0, 0, 0.0, weight_map, error_map,
                               grad_depth_r, grad_normal_r, grad_depth_n)

    norm_a = np.sqrt(np.sum(a_c * a_c, axis=1))
    norm_b = np.sqrt(np.sum(b_c * b_c, axis=1))
    denom = np.where(used, norm_a * norm_b, 1.0)
    score = np.clip(np.sum(a_c * b_c, axis=1) / denom, -1.0, 1.0)

    phi = np.where(used, transfer.errors, 0.0)
    if frozen_weights is not None:
        w = np.where(used, frozen_weights[rows, cols], 0.0)
    else:
        w = np.where(used, confidence_weight(phi), 0.0)
    weight_map[rows, cols] = w

    photometric = float(np.sum(w * (1.0 - score)) / count)
    geometric = float(np.sum(w * phi) / count)
    value = weights.photometric_consistency * photometric + weights.geometric_consistency * geometric

    # cycle term: reference depth and neighbor depth taps
    dphi = np.where(used, weights.geometric_consistency * w / count, 0.0)
    ddepth, dtaps = cycle_backward(transfer, cam_r, cam_n, dphi)
    np.add.at(grad_depth_n.reshape(-1), transfer.sample.taps.ravel(), dtaps.ravel())

    # NCC term: neighbor samples depend on depth and normal through rho
    dscore = np.where(used, -weights.photometric_consistency * w / count, 0.0)
    safe_b = np.where(used, norm_b, 1.0)
    dsamples = dscore[:, None] * (a_c / denom[:, None] - score[:, None] * b_c / (safe_b * safe_b)[:, None])
    dpixel = dsamples.reshape(-1)[:, None] * sample.gradient
    drho = (np.einsum('ek,ekj->ej', dpixel, nbr_jac) @ T_rn).reshape(patches, -1)
    ddepth += np.sum(drho * -rho, axis=1) / np.where(used, transfer.depth, 1.0)
    dnormal_c = np.einsum(
        'pk,pki->pi', drho,
        rays - (rho * transfer.depth[:, None])[:, :, None] * transfer.ref_dirs[:, None, :]
    ) / safe_offset[:, None]

    grad_depth_r[rows, cols] = np.where(used, ddepth, 0.0)
    grad_normal_r[rows, cols] = np.where(used[:, None], dnormal_c @ cam_r.rotation, 0.0)
    return MultiViewResult(
        value=value,
        photometric=photometric,
        geometric=geometric,
        used_pixels=count,
        mean_cycle_error=float(phi[used].mean()),
        weights=weight_map,
        errors=error_map,
        grad_depth_r=grad_depth_r,
        grad_normal_r=grad_normal_r,
        grad_depth_n=grad_depth_n,
    )
