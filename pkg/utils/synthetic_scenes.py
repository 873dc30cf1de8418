"""
Synthetic scenes, camera rigs and analytic depth maps for fixtures and tests
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from models.camera import Camera
from models.gaussian import GaussianPrimitive, Scene

IDENTITY_QUATERNION = (1.0, 0.0, 0.0, 0.0)
# image y grows downwards, so the rig's world up is -y
WORLD_UP = (0.0, -1.0, 0.0)


def quaternion_from_matrix(rotation: np.ndarray) -> np.ndarray:
    """(w, x, y, z) quaternions of rotation matrices, shape (..., 4)"""
    xyzw = Rotation.from_matrix(np.asarray(rotation, dtype=np.float64)).as_quat()
    return np.roll(xyzw, 1, axis=-1)


def frame_with_normal(normal: Sequence[float]) -> np.ndarray:
    """Rotation whose third column is `normal`"""
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(helper, n)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    return np.stack([u, v, n], axis=-1)


def random_quaternions(rng: np.random.Generator, count: int) -> np.ndarray:
    q = rng.normal(size=(count, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    q[q[:, 0] < 0] *= -1.0
    return q


def single_gaussian_scene(opacity: float = 0.9, scale: float = 0.3,
                          center: Sequence[float] = (0.0, 0.0, 0.0),
                          color: Sequence[float] = (0.8, 0.4, 0.2)) -> Scene:
    return Scene.from_gaussians([
        GaussianPrimitive(center, (scale, scale, scale), IDENTITY_QUATERNION, opacity, color),
    ])


def two_gaussian_scene(opacity: float = 0.95) -> Scene:
    """A flattened disc in front of a larger one, offset so both show from a ring of cameras"""
    return Scene.from_gaussians([
        GaussianPrimitive((0.0, 0.0, -0.25), (0.35, 0.35, 0.08), IDENTITY_QUATERNION, opacity, (0.9, 0.2, 0.2)),
        GaussianPrimitive((0.15, 0.1, 0.35), (0.5, 0.45, 0.1), IDENTITY_QUATERNION, opacity, (0.2, 0.3, 0.9)),
    ])


def translucent_ramp_scene(opacity: float = 0.8, spread: float = 2.0, thickness: float = 0.3,
                           backdrop_depth: float = 2.0) -> Scene:
    """
    A wide translucent disc at z = 0 in front of an opaque backdrop at
    z = backdrop_depth.

    Seen from the -z axis, the disc's peak alpha falls from `opacity` at the
    image center toward zero at the sides, so pixels sweep through alpha = 0.5
    where the step median jumps from the disc to the backdrop.
    """
    return Scene.from_gaussians([
        GaussianPrimitive((0.0, 0.0, 0.0), (spread, spread, thickness), IDENTITY_QUATERNION,
                          opacity, (0.7, 0.7, 0.7)),
        GaussianPrimitive((0.0, 0.0, backdrop_depth), (20.0, 20.0, thickness), IDENTITY_QUATERNION,
                          0.999, (0.1, 0.1, 0.1)),
    ])


def fibonacci_sphere(count: int) -> np.ndarray:
    """Roughly uniform unit vectors, shape (count, 3)"""
    i = np.arange(count) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / count)
    azimuth = np.pi * (1.0 + 5.0 ** 0.5) * i
    return np.stack([np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)], axis=-1)


def sphere_scene(count: int = 200, radius: float = 1.0, opacity: float = 0.98,
                 thickness: float = 0.02, coverage: float = 1.6,
                 rng: Optional[np.random.Generator] = None, jitter: float = 0.0) -> Scene:
    """
    Flat Gaussians tangent to a sphere, smallest axis along the radius.

    `coverage` scales the disc radius relative to the mean spacing of the
    samples; with `jitter` > 0 the centers are perturbed radially, which is
    the initialization used by optimization runs.
    """
    normals = fibonacci_sphere(count)
    spacing = radius * np.sqrt(4.0 * np.pi / count)
    disc = 0.5 * coverage * spacing
    centers = normals * radius
    if jitter > 0.0:
        rng = rng if rng is not None else np.random.default_rng(0)
        centers = centers * (1.0 + jitter * rng.normal(size=(count, 1)))
    rotations = quaternion_from_matrix(np.stack([frame_with_normal(n) for n in normals]))
    shade = 0.5 + 0.4 * normals
    return Scene(
        centers=centers,
        scales=np.tile([disc, disc, thickness], (count, 1)),
        rotations=rotations,
        opacities=np.full(count, opacity),
        colors=np.clip(shade, 0.0, 1.0),
    )


def random_scene(rng: np.random.Generator, count: int, extent: float = 1.0,
                 scale_range: Tuple[float, float] = (0.1, 0.4),
                 opacity_range: Tuple[float, float] = (0.3, 0.95)) -> Scene:
    return Scene(
        centers=rng.uniform(-extent, extent, size=(count, 3)),
        scales=rng.uniform(*scale_range, size=(count, 3)),
        rotations=random_quaternions(rng, count),
        opacities=rng.uniform(*opacity_range, size=count),
        colors=rng.uniform(0.0, 1.0, size=(count, 3)),
    )


def ring_cameras(count: int, distance: float = 3.0, elevation: float = 0.0,
                 width: int = 32, height: int = 24, focal: float = 30.0,
                 arc: float = 2.0 * np.pi, start: float = 0.0) -> List[Camera]:
    """
    Cameras on a circle of radius `distance` around the y axis, all looking
    at the origin. The first camera sits on the -z axis.
    """
    cameras = []
    step = arc / count if np.isclose(arc, 2.0 * np.pi) else arc / max(count - 1, 1)
    for i in range(count):
        angle = start + i * step
        eye = (distance * np.sin(angle), elevation, -distance * np.cos(angle))
        cameras.append(Camera.look_at(eye, (0.0, 0.0, 0.0), WORLD_UP, focal, focal, width, height))
    return cameras


def plane_depth(camera: Camera, normal: Sequence[float], offset: float) -> Tuple[np.ndarray, np.ndarray]:
    """Ray depth of the plane n.x = offset, with a mask of pixels hitting it in front of the camera"""
    n = np.asarray(normal, dtype=np.float64)
    directions = camera.pixel_directions(camera.pixel_grid())
    facing = directions @ n
    with np.errstate(divide='ignore', invalid='ignore'):
        depth = (offset - float(n @ camera.center)) / facing
    mask = np.isfinite(depth) & (depth > 0.0)
    return np.where(mask, depth, 0.0), mask


def sphere_depth(camera: Camera, radius: float = 1.0,
                 center: Sequence[float] = (0.0, 0.0, 0.0)) -> Tuple[np.ndarray, np.ndarray]:
    """Ray depth of the first sphere intersection, with a hit mask"""
    directions = camera.pixel_directions(camera.pixel_grid())
    oc = camera.center - np.asarray(center, dtype=np.float64)
    b = directions @ oc
    disc = b ** 2 - (float(oc @ oc) - radius ** 2)
    mask = disc >= 0.0
    depth = np.where(mask, -b - np.sqrt(np.where(mask, disc, 0.0)), 0.0)
    mask &= depth > 0.0
    return np.where(mask, depth, 0.0), mask
