"""
Continuous transmittance of Gaussian solids along rays, and alpha compositing
"""
from typing import NamedTuple, Tuple

import numpy as np

from core.geometry import restrict_scene, perpendicular_distance, restriction_value
from models.camera import Ray
from models.gaussian import Scene
from models.restriction import RayRestriction, TransmittanceProfile

# composite normals shorter than this are flagged invalid
MIN_NORMAL_NORM = 1e-12


class RayBundle(NamedTuple):
    """
    Gathered, sorted restrictions of a batch of rays, arrays indexed (ray, slot).

    Slots are ordered by (t_star, gaussian_id) with culled slots moved to the
    end. Culled slots keep their true a and t_star but carry g_peak = 0, which
    makes them exact no-ops (T_i = 1, weight 0) in every formula.
    """
    ids: np.ndarray
    valid: np.ndarray
    a: np.ndarray
    t_star: np.ndarray
    g_peak: np.ndarray
    closest: np.ndarray
    precision_dir: np.ndarray
    colors: np.ndarray
    normals: np.ndarray
    normal_sign: np.ndarray
    origins: np.ndarray
    directions: np.ndarray

    @property
    def ray_count(self) -> int:
        return self.a.shape[0]

    @property
    def slots(self) -> int:
        return self.a.shape[1]


def gather_bundle(scene: Scene, origins: np.ndarray, directions: np.ndarray,
                  alpha_cutoff: float = 1e-4, near: float = 0.01,
                  prefilter_sigmas: float = 3.0) -> RayBundle:
    """
    Restrict every Gaussian to every ray, cull and sort per ray.

    A Gaussian participates when g_peak >= alpha_cutoff, its peak lies past
    `near`, and its center is within `prefilter_sigmas` largest scales of the ray.
    """
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    count = len(scene)
    rays = len(origins)
    if count == 0:
        empty = np.zeros((rays, 0))
        return RayBundle(
            ids=np.zeros((rays, 0), dtype=np.int64), valid=np.zeros((rays, 0), dtype=bool),
            a=empty, t_star=empty, g_peak=empty, closest=np.zeros((rays, 0, 3)),
            precision_dir=np.zeros((rays, 0, 3)), colors=np.zeros((rays, 0, 3)),
            normals=np.zeros((rays, 0, 3)), normal_sign=empty,
            origins=origins, directions=directions,
        )

    batch = restrict_scene(scene, origins, directions)
    radius = prefilter_sigmas * scene.scales.max(axis=1)
    valid = (
        (batch.g_peak >= alpha_cutoff)
        & (batch.t_star >= near)
        & (perpendicular_distance(scene.centers, origins, directions) <= radius[None, :])
    )

    ids = np.broadcast_to(np.arange(count), (rays, count))
    key = np.where(valid, batch.t_star, np.inf)
    # ids are already ascending, so a stable sort breaks t_star ties by id
    order = np.argsort(key, axis=1, kind='stable')
    slots = int(valid.sum(axis=1).max()) if rays else 0
    order = order[:, :slots]

    def take(array):
        return np.take_along_axis(array, order, axis=1)

    def take3(array):
        return np.take_along_axis(array, order[:, :, None], axis=1)

    sorted_ids = take(ids)
    sorted_valid = take(valid)

    axis_normals = scene.axis_normals[sorted_ids]
    facing = np.einsum('rki,ri->rk', axis_normals, directions)
    sign = np.where(facing > 0.0, -1.0, 1.0)

    return RayBundle(
        ids=sorted_ids,
        valid=sorted_valid,
        a=take(batch.a),
        t_star=take(batch.t_star),
        g_peak=np.where(sorted_valid, take(batch.g_peak), 0.0),
        closest=take3(batch.closest),
        precision_dir=take3(batch.precision_dir),
        colors=scene.colors[sorted_ids],
        normals=axis_normals * sign[:, :, None],
        normal_sign=sign,
        origins=origins,
        directions=directions,
    )


def build_profile(scene: Scene, ray: Ray, alpha_cutoff: float = 1e-4, near: float = 0.01,
                  prefilter_sigmas: float = 3.0) -> TransmittanceProfile:
    """Profile of one ray through a scene, normals oriented against the ray"""
    bundle = gather_bundle(scene, ray.origin[None], ray.direction[None], alpha_cutoff, near, prefilter_sigmas)
    keep = bundle.valid[0]
    restrictions = [
        RayRestriction(int(i), a, t, g)
        for i, a, t, g in zip(bundle.ids[0][keep], bundle.a[0][keep], bundle.t_star[0][keep], bundle.g_peak[0][keep])
    ]
    return TransmittanceProfile(restrictions, bundle.colors[0][keep], bundle.normals[0][keep], scene=scene, ray=ray)


def profile_arrays(profile: TransmittanceProfile) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(a, t_star, g_peak) of a profile as single-ray batches of shape (1, K)"""
    return profile.a[None, :], profile.t_star[None, :], profile.g_peak[None, :]


def ti_batch(a, t_star, g_peak, t):
    """
    Per-Gaussian transmittance: v(t) before the peak, (1 - g_peak) / v(t) after it
    """
    G = restriction_value(a, t_star, g_peak, t)
    v = np.sqrt(1.0 - G)
    return np.where(t > t_star, (1.0 - g_peak) / v, v)


def ti(restriction: RayRestriction, t: float) -> float:
    if np.isinf(t):
        return 1.0 if t < 0 else 1.0 - restriction.g_peak
    return float(ti_batch(restriction.a, restriction.t_star, restriction.g_peak, t))


def total_transmittance_batch(a: np.ndarray, t_star: np.ndarray, g_peak: np.ndarray,
                              t: np.ndarray) -> np.ndarray:
    """
    T at ray parameters t of shape (R,) or (R, M), for slot arrays of shape (R, K)
    """
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 1:
        return np.prod(ti_batch(a, t_star, g_peak, t[:, None]), axis=1)
    return np.prod(ti_batch(a[:, None, :], t_star[:, None, :], g_peak[:, None, :], t[:, :, None]), axis=2)


def residual_transmittance_batch(g_peak: np.ndarray) -> np.ndarray:
    """T(+inf) = prod(1 - alpha)"""
    return np.prod(1.0 - g_peak, axis=-1)


def total_transmittance(profile: TransmittanceProfile, t: float) -> float:
    if not len(profile):
        return 1.0
    if np.isinf(t):
        return 1.0 if t < 0 else float(residual_transmittance_batch(profile.g_peak))
    a, t_star, g_peak = profile_arrays(profile)
    return float(total_transmittance_batch(a, t_star, g_peak, np.array([t]))[0])


def compositing_weights(alphas: np.ndarray) -> np.ndarray:
    """w_i = alpha_i * prod_{j<i} (1 - alpha_j) along the last axis"""
    alphas = np.asarray(alphas, dtype=np.float64)
    return alphas * exclusive_prefix_transmittance(alphas)


def exclusive_prefix_transmittance(alphas: np.ndarray) -> np.ndarray:
    """prod_{j<i} (1 - alpha_j) along the last axis"""
    survive = np.cumprod(1.0 - alphas, axis=-1)
    prefix = np.ones_like(alphas)
    prefix[..., 1:] = survive[..., :-1]
    return prefix


def single_gaussian_color(restriction: RayRestriction, color) -> np.ndarray:
    """c * g_peak, the exact color of a ray crossing one Gaussian solid"""
    return np.asarray(color, dtype=np.float64) * restriction.g_peak


def composite_color_batch(g_peak: np.ndarray, colors: np.ndarray) -> np.ndarray:
    weights = compositing_weights(g_peak)
    return np.einsum('...k,...kc->...c', weights, colors)


def composite_color(profile: TransmittanceProfile) -> np.ndarray:
    if not len(profile):
        return np.zeros(3)
    return composite_color_batch(profile.g_peak, profile.colors)


def composite_normal_batch(g_peak: np.ndarray, normals: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(unit normal, valid, raw weighted sum) along the slot axis"""
    weights = compositing_weights(g_peak)
    raw = np.einsum('...k,...kc->...c', weights, normals)
    norm = np.linalg.norm(raw, axis=-1)
    valid = norm > MIN_NORMAL_NORM
    unit = np.where(valid[..., None], raw / np.where(valid, norm, 1.0)[..., None], 0.0)
    return unit, valid, raw


def composite_normal(profile: TransmittanceProfile) -> Tuple[np.ndarray, bool]:
    """Compositing-weighted normal, renormalized; invalid when the weighted sum vanishes"""
    if not len(profile):
        return np.zeros(3), False
    unit, valid, _ = composite_normal_batch(profile.g_peak, profile.normals)
    return unit, bool(valid)


def transmittance_curve(profile: TransmittanceProfile, ts: np.ndarray) -> np.ndarray:
    """T sampled on a grid of ray parameters"""
    ts = np.asarray(ts, dtype=np.float64)
    if not len(profile):
        return np.ones_like(ts)
    a, t_star, g_peak = profile_arrays(profile)
    return total_transmittance_batch(a, t_star, g_peak, ts[None, :])[0]
