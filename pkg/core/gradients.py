"""
Closed-form backward pass: transmittance partials, the implicit median-depth
gradient and the compositing chain rule, mapped onto Gaussian parameters
"""
from typing import Dict, Optional, Tuple

import numpy as np

from core.geometry import rotation_jacobian
from core.transmittance import RayBundle, exclusive_prefix_transmittance, gather_bundle
from models.camera import Ray
from models.gaussian import GaussianPrimitive, Scene
from models.gradient_buffer import GradientBuffer
from models.restriction import RayRestriction, TransmittanceProfile
from utils.errors import DegenerateGradientError, InputValidationError

MIN_MEDIAN_SLOPE = 1e-10


class TiPartials:
    """T_i(t) and its partials w.r.t. t, a, t_star and g_peak, broadcast over any shape"""

    __slots__ = ('value', 'dt', 'da', 'dt_star', 'dg')

    def __init__(self, a, t_star, g_peak, t):
        delta = t - t_star
        E = np.exp(-a * delta * delta)
        G = g_peak * E
        v = np.sqrt(1.0 - G)
        far = t > t_star

        dT_dG = np.where(far, (1.0 - g_peak) / (2.0 * v ** 3), -0.5 / v)
        self.value = np.where(far, (1.0 - g_peak) / v, v)
        self.dt = dT_dG * (-2.0 * a * delta * G)
        self.da = dT_dG * (-delta * delta * G)
        self.dt_star = dT_dG * (2.0 * a * delta * G)
        self.dg = dT_dG * E + np.where(far, -1.0 / v, 0.0)


def dti_dt(restriction: RayRestriction, t: float) -> float:
    """dT_i/dt; zero at the peak where both branches are flat"""
    partials = TiPartials(restriction.a, restriction.t_star, restriction.g_peak, t)
    return float(partials.dt)


def median_slope_batch(a, t_star, g_peak, t_med) -> Tuple[np.ndarray, TiPartials]:
    """sum_i (0.5 / T_i) dT_i/dt at t_med for slot arrays (R, K)"""
    partials = TiPartials(a, t_star, g_peak, t_med[:, None])
    slope = np.sum(0.5 / partials.value * partials.dt, axis=1)
    return slope, partials


def dT_dt_at_median(profile: TransmittanceProfile, t_med: float) -> float:
    slope, _ = median_slope_batch(profile.a[None], profile.t_star[None], profile.g_peak[None], np.array([t_med]))
    value = float(slope[0])
    if abs(value) < MIN_MEDIAN_SLOPE:
        raise DegenerateGradientError(f"Transmittance is flat at the median (slope {value:.3e})", value)
    return value


def depth_slot_gradients(bundle: RayBundle, t_med: np.ndarray, valid: np.ndarray,
                         upstream: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    dL/d(a, t_star, g_peak) per slot from an upstream dL/dt_med per ray.

    Rays that are masked, carry zero upstream, or have a slope below 1e-10
    contribute nothing; the last are reported through the returned skip mask.
    """
    rays, slots = bundle.a.shape
    da = np.zeros((rays, slots))
    dt_star = np.zeros((rays, slots))
    dg = np.zeros((rays, slots))
    active = valid & (upstream != 0.0)
    skipped = np.zeros(rays, dtype=bool)
    if not active.any() or slots == 0:
        return da, dt_star, dg, skipped

    idx = np.flatnonzero(active)
    slope, partials = median_slope_batch(bundle.a[idx], bundle.t_star[idx], bundle.g_peak[idx], t_med[idx])
    flat = np.abs(slope) < MIN_MEDIAN_SLOPE
    skipped[idx[flat]] = True

    with np.errstate(divide='ignore', invalid='ignore'):
        coef = -upstream[idx][:, None] * (0.5 / partials.value) / slope[:, None]
    coef = np.where(flat[:, None] | ~bundle.valid[idx], 0.0, coef)
    da[idx] = coef * partials.da
    dt_star[idx] = coef * partials.dt_star
    dg[idx] = coef * partials.dg
    return da, dt_star, dg, skipped


def compositing_slot_gradients(bundle: RayBundle, dcolor: np.ndarray, dnormal: np.ndarray,
                               normal_raw: np.ndarray, consistency_target: np.ndarray,
                               consistency_scale: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Chain rule of front-to-back compositing.

    Inputs are per ray: dL/d(color), dL/d(unit normal), the unnormalized
    composite normal, and the normal-consistency target/scale for the term
    scale * sum_i w_i (1 - n_i . target). Returns per-slot dL/d(alpha),
    dL/d(color_i) and dL/d(n_i).
    """
    alphas = bundle.g_peak
    prefix = exclusive_prefix_transmittance(alphas)
    weights = alphas * prefix

    norm = np.linalg.norm(normal_raw, axis=-1, keepdims=True)
    has_normal = norm > 1e-12
    unit = np.where(has_normal, normal_raw / np.where(has_normal, norm, 1.0), 0.0)
    tangential = dnormal - np.sum(dnormal * unit, axis=-1, keepdims=True) * unit
    draw = np.where(has_normal, tangential / np.where(has_normal, norm, 1.0), 0.0)

    dweights = (
        np.einsum('rkc,rc->rk', bundle.colors, dcolor)
        + np.einsum('rkc,rc->rk', bundle.normals, draw)
        + consistency_scale[:, None] * (1.0 - np.einsum('rkc,rc->rk', bundle.normals, consistency_target))
    )
    dcolors = weights[:, :, None] * dcolor[:, None, :]
    dnormals = weights[:, :, None] * (draw - consistency_scale[:, None] * consistency_target)[:, None, :]

    contrib = dweights * weights
    later = np.cumsum(contrib[:, ::-1], axis=1)[:, ::-1] - contrib
    dalpha = dweights * prefix - later / (1.0 - alphas)
    return dalpha, dcolors, dnormals


def accumulate_restriction_gradients(buffer: GradientBuffer, scene: Scene, bundle: RayBundle,
                                     da: np.ndarray, dt_star: np.ndarray, dg: np.ndarray):
    """
    Map dL/d(a, t_star, g_peak) onto center, opacity and the staged precision gradient.

    a = w^T P w, t_star = -w^T P d / a, g_peak = o exp(-m^T P m), so with m the
    closest-approach offset:
      dL/dc = P (dt_star / a * w + 2 g dg m)
      dL/dP = da w w^T - dt_star / a * w m^T - dg g m m^T
    """
    mask = bundle.valid
    if not mask.any():
        return
    ids = bundle.ids[mask]
    w = np.broadcast_to(bundle.directions[:, None, :], bundle.closest.shape)[mask]
    m = bundle.closest[mask]
    a = bundle.a[mask]
    g = bundle.g_peak[mask]
    ga = da[mask]
    gt = dt_star[mask] / a
    gg = dg[mask] * g

    precisions = scene.precisions[ids]
    center = np.einsum('eij,ej->ei', precisions, gt[:, None] * w + 2.0 * gg[:, None] * m)
    precision = (
        ga[:, None, None] * np.einsum('ei,ej->eij', w, w)
        - gt[:, None, None] * np.einsum('ei,ej->eij', w, m)
        - gg[:, None, None] * np.einsum('ei,ej->eij', m, m)
    )
    buffer.accumulate('center', ids, center)
    buffer.accumulate('precision', ids, precision)
    buffer.accumulate('opacity', ids, gg / scene.opacities[ids])


def accumulate_appearance_gradients(buffer: GradientBuffer, scene: Scene, bundle: RayBundle,
                                    dcolors: np.ndarray, dnormals: np.ndarray):
    """Per-slot color and oriented-normal gradients into color and the staged rotation matrix"""
    mask = bundle.valid
    if not mask.any():
        return
    ids = bundle.ids[mask]
    buffer.accumulate('color', ids, dcolors[mask])

    axis = scene.normal_axes[ids]
    column = bundle.normal_sign[mask][:, None] * dnormals[mask]
    drot = np.zeros((len(ids), 3, 3))
    drot[np.arange(len(ids)), :, axis] = column
    buffer.accumulate('rotation_matrix', ids, drot)


def resolve_precision_gradients(buffer: GradientBuffer, scene: Scene) -> GradientBuffer:
    """
    Turn staged dL/dP and dL/dR into scale and quaternion gradients.

    P = R D R^T with D = diag(1/s^2): dL/dR = (Gp + Gp^T) R D and
    dL/ds_k = -2 / s_k^3 * r_k^T Gp r_k.
    """
    if not buffer.has_staged():
        return buffer
    Gp = buffer.precision
    R = scene.rotation_matrices
    inv_sq = 1.0 / scene.scales ** 2

    sym = Gp + np.transpose(Gp, (0, 2, 1))
    dR = np.einsum('nij,njk->nik', sym, R) * inv_sq[:, None, :] + buffer.rotation_matrix
    quadratic = np.einsum('nik,nij,njk->nk', R, Gp, R)
    buffer.scales += -2.0 / scene.scales ** 3 * quadratic
    buffer.rotation += np.einsum('nij,nqij->nq', dR, rotation_jacobian(scene.rotations))
    buffer.clear_staging()
    buffer.check_finite()
    return buffer


def finalize_gradients(buffer: GradientBuffer, scene: Scene) -> GradientBuffer:
    """Resolve staged gradients and project quaternion gradients onto the unit sphere"""
    resolve_precision_gradients(buffer, scene)
    return buffer.finalize(scene.rotations)


def _profile_bundle(profile: TransmittanceProfile) -> Tuple[Scene, RayBundle]:
    if profile.scene is None or profile.ray is None:
        raise InputValidationError("Backward pass needs a profile gathered from a scene")
    scene, ray = profile.scene, profile.ray
    bundle = gather_bundle(scene, ray.origin[None], ray.direction[None], alpha_cutoff=0.0,
                           near=-np.inf, prefilter_sigmas=np.inf)
    keep = np.isin(bundle.ids[0], profile.gaussian_ids)
    bundle = bundle._replace(valid=bundle.valid & keep[None, :],
                             g_peak=np.where(keep[None, :], bundle.g_peak, 0.0))
    return scene, bundle


def depth_backward(profile: TransmittanceProfile, t_med: float, upstream: float,
                   buffer: GradientBuffer, valid: bool = True) -> bool:
    """
    Accumulate upstream * dt_med/dtheta into the buffer for every Gaussian of the profile.

    Returns False when the pixel was skipped (masked, or flat transmittance at
    the median, which also increments buffer.skipped_pixels).
    """
    if not valid or not len(profile):
        return False
    scene, bundle = _profile_bundle(profile)
    da, dt_star, dg, skipped = depth_slot_gradients(
        bundle, np.array([t_med]), np.array([True]), np.array([float(upstream)])
    )
    if skipped[0]:
        buffer.skipped_pixels += 1
        return False
    accumulate_restriction_gradients(buffer, scene, bundle, da, dt_star, dg)
    return True


def dti_dtheta(restriction: RayRestriction, gaussian: GaussianPrimitive, ray: Ray,
               t: float) -> Dict[str, np.ndarray]:
    """
    dT_i(t)/d(center, scales, rotation, opacity) for one Gaussian and ray.

    The rotation entry is projected onto the tangent space of the unit quaternion.
    """
    scene = Scene.from_gaussians([gaussian])
    bundle = gather_bundle(scene, ray.origin[None], ray.direction[None], alpha_cutoff=0.0,
                           near=-np.inf, prefilter_sigmas=np.inf)
    partials = TiPartials(restriction.a, restriction.t_star, restriction.g_peak, t)
    buffer = GradientBuffer(1)
    accumulate_restriction_gradients(buffer, scene, bundle, np.array([[float(partials.da)]]),
                                     np.array([[float(partials.dt_star)]]), np.array([[float(partials.dg)]]))
    finalize_gradients(buffer, scene)
    return {
        'center': buffer.center[0].copy(),
        'scales': buffer.scales[0].copy(),
        'rotation': buffer.rotation[0].copy(),
        'opacity': float(buffer.opacity[0]),
    }


def backward_bundle(buffer: GradientBuffer, scene: Scene, bundle: RayBundle,
                    t_med: np.ndarray, valid: np.ndarray, depth_upstream: np.ndarray,
                    dcolor: Optional[np.ndarray] = None, dnormal: Optional[np.ndarray] = None,
                    normal_raw: Optional[np.ndarray] = None,
                    consistency_target: Optional[np.ndarray] = None,
                    consistency_scale: Optional[np.ndarray] = None) -> int:
    """
    Full per-ray backward pass for a bundle; returns the number of skipped rays
    """
    rays = bundle.ray_count
    da, dt_star, dg, skipped = depth_slot_gradients(bundle, t_med, valid, depth_upstream)

    zeros3 = np.zeros((rays, 3))
    dcolor = zeros3 if dcolor is None else dcolor
    dnormal = zeros3 if dnormal is None else dnormal
    normal_raw = zeros3 if normal_raw is None else normal_raw
    consistency_target = zeros3 if consistency_target is None else consistency_target
    consistency_scale = np.zeros(rays) if consistency_scale is None else consistency_scale

    if bundle.slots and (np.any(dcolor) or np.any(dnormal) or np.any(consistency_scale)):
        dalpha, dcolors, dnormals = compositing_slot_gradients(
            bundle, dcolor, dnormal, normal_raw, consistency_target, consistency_scale
        )
        dg = dg + dalpha
        accumulate_appearance_gradients(buffer, scene, bundle, dcolors, dnormals)

    accumulate_restriction_gradients(buffer, scene, bundle, da, dt_star, dg)
    count = int(skipped.sum())
    buffer.skipped_pixels += count
    return count
