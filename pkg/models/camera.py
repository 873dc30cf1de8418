"""
Camera and Ray Models
"""
from typing import Dict, Any, Sequence, Tuple

import numpy as np

from utils.errors import InputValidationError


class Ray:
    """
    Ray x(t) = origin + t * direction with a unit direction
    """

    def __init__(self, origin: Sequence[float], direction: Sequence[float]):
        self.origin = np.array(origin, dtype=np.float64).reshape(3)
        self.direction = np.array(direction, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(self.direction))
        if abs(norm - 1.0) > 1e-12:
            raise InputValidationError(f"Ray direction must be unit length, norm is {norm!r}")
        self.origin.flags.writeable = False
        self.direction.flags.writeable = False

    @classmethod
    def through(cls, origin: Sequence[float], direction: Sequence[float]) -> 'Ray':
        """Build a ray, normalizing the direction"""
        direction = np.asarray(direction, dtype=np.float64)
        return cls(origin, direction / np.linalg.norm(direction))

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


class Camera:
    """
    Pinhole camera with world-to-camera extrinsics: x_cam = R x_world + T.

    The camera looks down +z, pixel x grows right and pixel y grows down.
    """

    def __init__(self, intrinsics: np.ndarray, rotation: np.ndarray, translation: Sequence[float],
                 width: int, height: int):
        self.intrinsics = np.array(intrinsics, dtype=np.float64).reshape(3, 3)
        self.rotation = np.array(rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.array(translation, dtype=np.float64).reshape(3)
        self.width = int(width)
        self.height = int(height)
        self._validate()

        for array in (self.intrinsics, self.rotation, self.translation):
            array.flags.writeable = False

        self.intrinsics_inv = np.linalg.inv(self.intrinsics)
        self.center = -self.rotation.T @ self.translation

    def _validate(self):
        K = self.intrinsics
        if K[2, 2] != 1.0 or K[1, 0] != 0.0 or K[2, 0] != 0.0 or K[2, 1] != 0.0:
            raise InputValidationError("Intrinsics must be upper triangular with K[2][2] = 1")
        if K[0, 0] <= 0.0 or K[1, 1] <= 0.0:
            raise InputValidationError("Focal lengths must be positive")
        deviation = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if deviation > 1e-9 or np.linalg.det(self.rotation) < 0:
            raise InputValidationError(f"Camera rotation is not orthonormal (deviation {deviation:.3e})")
        if self.width <= 0 or self.height <= 0:
            raise InputValidationError("Camera width and height must be positive")

    @classmethod
    def from_parameters(cls, fx: float, fy: float, cx: float, cy: float,
                        rotation: Sequence[float], translation: Sequence[float],
                        width: int, height: int) -> 'Camera':
        K = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        return cls(K, np.asarray(rotation, dtype=np.float64).reshape(3, 3), translation, width, height)

    @classmethod
    def look_at(cls, eye: Sequence[float], target: Sequence[float], up: Sequence[float],
                fx: float, fy: float, width: int, height: int) -> 'Camera':
        """Camera at `eye` looking toward `target`, principal point at the image center"""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rotation = np.stack([right, down, forward])
        translation = -rotation @ eye
        return cls.from_parameters(fx, fy, width / 2.0, height / 2.0, rotation, translation, width, height)

    @property
    def projection_matrix(self) -> np.ndarray:
        return self.intrinsics @ np.hstack([self.rotation, self.translation[:, None]])

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def project(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates and camera-space z of world points, shape (..., 2) and (...)"""
        cam = self.world_to_camera(points)
        z = cam[..., 2]
        homogeneous = cam @ self.intrinsics.T
        with np.errstate(divide='ignore', invalid='ignore'):
            pixels = homogeneous[..., :2] / homogeneous[..., 2:3]
        return pixels, z

    def pixel_directions(self, pixels: np.ndarray) -> np.ndarray:
        """Unit world-space ray directions through pixel coordinates, shape (..., 3)"""
        pixels = np.asarray(pixels, dtype=np.float64)
        homogeneous = np.concatenate([pixels, np.ones(pixels.shape[:-1] + (1,))], axis=-1)
        cam_dirs = homogeneous @ self.intrinsics_inv.T
        world = cam_dirs @ self.rotation
        return world / np.linalg.norm(world, axis=-1, keepdims=True)

    def pixel_grid(self) -> np.ndarray:
        """Pixel-center coordinates (x + 0.5, y + 0.5) for every pixel, shape (H, W, 2)"""
        xs = np.arange(self.width) + 0.5
        ys = np.arange(self.height) + 0.5
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)

    def row_rays(self, row: int) -> Tuple[np.ndarray, np.ndarray]:
        """Origins and unit directions of the rays through one image row"""
        xs = np.arange(self.width) + 0.5
        pixels = np.stack([xs, np.full(self.width, row + 0.5)], axis=-1)
        directions = self.pixel_directions(pixels)
        origins = np.broadcast_to(self.center, directions.shape)
        return origins, directions

    def ray(self, x: float, y: float) -> Ray:
        """Ray through pixel coordinates (x, y)"""
        direction = self.pixel_directions(np.array([x, y]))
        return Ray(self.center, direction)

    def to_dict(self) -> Dict[str, Any]:
        K = self.intrinsics
        return {
            'width': self.width,
            'height': self.height,
            'fx': float(K[0, 0]),
            'fy': float(K[1, 1]),
            'cx': float(K[0, 2]),
            'cy': float(K[1, 2]),
            'rotation': self.rotation.reshape(-1).tolist(),
            'translation': self.translation.tolist(),
        }
