"""
Gaussian evaluation and exact restriction of Gaussians to rays
"""
from typing import NamedTuple

import numpy as np

from models.gaussian import GaussianPrimitive, Scene
from models.camera import Ray
from models.restriction import RayRestriction


class RestrictionBatch(NamedTuple):
    """
    Restrictions of N Gaussians to R rays, every array indexed (ray, gaussian).

    `closest` is m = (o - c) + t_star * w, the offset of the closest-approach
    point from the center, reused by the backward pass.
    """
    a: np.ndarray
    t_star: np.ndarray
    g_peak: np.ndarray
    closest: np.ndarray
    precision_dir: np.ndarray


def eval_gaussian(gaussian: GaussianPrimitive, x) -> float:
    """o * exp(-(x - c)^T Sigma^-1 (x - c))"""
    d = np.asarray(x, dtype=np.float64) - gaussian.center
    return gaussian.opacity * float(np.exp(-d @ gaussian.precision @ d))


def eval_scene(scene: Scene, points: np.ndarray) -> np.ndarray:
    """Every Gaussian evaluated at every point, shape (P, N)"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    d = points[:, None, :] - scene.centers[None, :, :]
    q = np.einsum('pni,nij,pnj->pn', d, scene.precisions, d)
    return scene.opacities[None, :] * np.exp(-q)


def scene_vacancy(scene: Scene, points: np.ndarray) -> np.ndarray:
    """Product of all vacancies at each point; 0.5 marks the median isosurface"""
    return np.prod(np.sqrt(1.0 - eval_scene(scene, points)), axis=1)


def restrict_batch(centers: np.ndarray, precisions: np.ndarray, opacities: np.ndarray,
                   origins: np.ndarray, directions: np.ndarray) -> RestrictionBatch:
    """
    Exact 1D restriction G(t) = g_peak * exp(-a (t - t_star)^2) for every (ray, Gaussian) pair
    """
    d = origins[:, None, :] - centers[None, :, :]
    pw = np.einsum('nij,rj->rni', precisions, directions)
    a = np.einsum('rni,ri->rn', pw, directions)
    b = np.einsum('rni,rni->rn', pw, d)
    t_star = -b / a
    m = d + t_star[:, :, None] * directions[:, None, :]
    q = np.einsum('rni,nij,rnj->rn', m, precisions, m)
    # q >= 0 analytically; rounding can push it a hair below
    g_peak = opacities[None, :] * np.exp(-np.maximum(q, 0.0))
    return RestrictionBatch(a=a, t_star=t_star, g_peak=g_peak, closest=m, precision_dir=pw)


def restrict_scene(scene: Scene, origins: np.ndarray, directions: np.ndarray) -> RestrictionBatch:
    return restrict_batch(scene.centers, scene.precisions, scene.opacities,
                          np.asarray(origins, dtype=np.float64).reshape(-1, 3),
                          np.asarray(directions, dtype=np.float64).reshape(-1, 3))


def restrict_to_ray(gaussian: GaussianPrimitive, ray: Ray, gaussian_id: int = 0) -> RayRestriction:
    """Restriction of one Gaussian to one ray; badly conditioned covariances are rejected"""
    gaussian.check_conditioning(gaussian_id)
    batch = restrict_batch(gaussian.center[None], gaussian.precision[None], np.array([gaussian.opacity]),
                           ray.origin[None], ray.direction[None])
    return RayRestriction(gaussian_id, batch.a[0, 0], batch.t_star[0, 0], batch.g_peak[0, 0])


def restriction_value(a, t_star, g_peak, t):
    return g_peak * np.exp(-a * (t - t_star) ** 2)


def vacancy(restriction: RayRestriction, t: float) -> float:
    """v(t) = sqrt(1 - G(t))"""
    return float(np.sqrt(1.0 - restriction_value(restriction.a, restriction.t_star, restriction.g_peak, t)))


def attenuation_sigma_batch(a, t_star, g_peak, t):
    """|d/dt log v| = |G'(t)| / (2 (1 - G(t)))"""
    delta = t - t_star
    G = restriction_value(a, t_star, g_peak, t)
    return np.abs(a * delta * G) / (1.0 - G)


def attenuation_sigma(restriction: RayRestriction, t: float) -> float:
    return float(attenuation_sigma_batch(restriction.a, restriction.t_star, restriction.g_peak, t))


def perpendicular_distance(centers: np.ndarray, origins: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Distance of every center from every ray line, shape (R, N)"""
    d = centers[None, :, :] - origins[:, None, :]
    along = np.einsum('rni,ri->rn', d, directions)
    perp = d - along[:, :, None] * directions[:, None, :]
    return np.linalg.norm(perp, axis=2)


def rotation_jacobian(quaternions: np.ndarray) -> np.ndarray:
    """
    dR/dq of the polynomial quaternion-to-rotation map, shape (..., 4, 3, 3)
    """
    q = np.asarray(quaternions, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    zero = np.zeros_like(w)
    jac = np.empty(q.shape[:-1] + (4, 3, 3))

    jac[..., 0, :, :] = 2.0 * np.stack([
        np.stack([zero, -z, y], axis=-1),
        np.stack([z, zero, -x], axis=-1),
        np.stack([-y, x, zero], axis=-1),
    ], axis=-2)
    jac[..., 1, :, :] = 2.0 * np.stack([
        np.stack([zero, y, z], axis=-1),
        np.stack([y, -2.0 * x, -w], axis=-1),
        np.stack([z, w, -2.0 * x], axis=-1),
    ], axis=-2)
    jac[..., 2, :, :] = 2.0 * np.stack([
        np.stack([-2.0 * y, x, w], axis=-1),
        np.stack([x, zero, z], axis=-1),
        np.stack([-w, z, -2.0 * y], axis=-1),
    ], axis=-2)
    jac[..., 3, :, :] = 2.0 * np.stack([
        np.stack([-2.0 * z, -w, x], axis=-1),
        np.stack([w, -2.0 * z, y], axis=-1),
        np.stack([x, y, zero], axis=-1),
    ], axis=-2)
    return jac
