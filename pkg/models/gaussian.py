"""
Gaussian Primitive and Scene Models
"""
from typing import Dict, Any, List, Optional, Sequence

import numpy as np

from utils.errors import InputValidationError, DegenerateCovarianceError

# Opacity is capped below 1 so the vacancy never reaches 0 and every closed form stays finite
OPACITY_EPS = 1e-4
MAX_OPACITY = 1.0 - OPACITY_EPS
MAX_CONDITION_NUMBER = 1e12


def _frozen(values, shape=None) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    if shape is not None and array.shape != shape:
        raise InputValidationError(f"Expected shape {shape}, got {array.shape}")
    array.flags.writeable = False
    return array


def quaternion_to_rotation(quaternions: np.ndarray) -> np.ndarray:
    """
    Rotation matrices for unit quaternions stored as (w, x, y, z), batched over leading axes
    """
    q = np.asarray(quaternions, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    rot = np.empty(q.shape[:-1] + (3, 3))
    rot[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    rot[..., 0, 1] = 2.0 * (x * y - w * z)
    rot[..., 0, 2] = 2.0 * (x * z + w * y)
    rot[..., 1, 0] = 2.0 * (x * y + w * z)
    rot[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    rot[..., 1, 2] = 2.0 * (y * z - w * x)
    rot[..., 2, 0] = 2.0 * (x * z - w * y)
    rot[..., 2, 1] = 2.0 * (y * z + w * x)
    rot[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return rot


class GaussianPrimitive:
    """
    Anisotropic 3D Gaussian G(x) = o * exp(-(x - x_c)^T Sigma^-1 (x - x_c)).

    The exponent carries no 1/2 factor. Instances are immutable; use `replace`
    to derive a modified primitive.
    """

    def __init__(self, center: Sequence[float], scales: Sequence[float],
                 rotation: Sequence[float], opacity: float,
                 color: Sequence[float] = (0.5, 0.5, 0.5)):
        self._center = _frozen(center, (3,))
        self._scales = _frozen(scales, (3,))
        self._rotation = _frozen(rotation, (4,))
        self._opacity = float(opacity)
        self._color = _frozen(color, (3,))
        self._validate()

        rot = quaternion_to_rotation(self._rotation)
        rot.flags.writeable = False
        self._rotation_matrix = rot

    def _validate(self):
        if not np.all(np.isfinite(self._center)):
            raise InputValidationError("Gaussian center must be finite")
        if not np.all(self._scales > 0) or not np.all(np.isfinite(self._scales)):
            raise InputValidationError(f"Gaussian scales must be positive, got {self._scales.tolist()}")
        norm = float(np.linalg.norm(self._rotation))
        if abs(norm - 1.0) > 1e-9:
            raise InputValidationError(f"Rotation quaternion must be unit length, norm is {norm!r}")
        if not (0.0 < self._opacity <= MAX_OPACITY):
            raise InputValidationError(f"Opacity must lie in (0, {MAX_OPACITY}], got {self._opacity!r}")
        if np.any(self._color < 0.0) or np.any(self._color > 1.0):
            raise InputValidationError(f"Color must lie in [0, 1], got {self._color.tolist()}")

    @property
    def center(self) -> np.ndarray:
        return self._center

    @property
    def scales(self) -> np.ndarray:
        return self._scales

    @property
    def rotation(self) -> np.ndarray:
        return self._rotation

    @property
    def opacity(self) -> float:
        return self._opacity

    @property
    def color(self) -> np.ndarray:
        return self._color

    @property
    def rotation_matrix(self) -> np.ndarray:
        return self._rotation_matrix

    @property
    def covariance(self) -> np.ndarray:
        rot = self._rotation_matrix
        return rot @ np.diag(self._scales ** 2) @ rot.T

    @property
    def precision(self) -> np.ndarray:
        """Sigma^-1 = R diag(1/s^2) R^T, built analytically"""
        rot = self._rotation_matrix
        return rot @ np.diag(1.0 / self._scales ** 2) @ rot.T

    @property
    def normal_axis(self) -> int:
        return int(np.argmin(self._scales))

    @property
    def axis_normal(self) -> np.ndarray:
        """Unit axis of the smallest scale, before any orientation toward a camera"""
        return self._rotation_matrix[:, self.normal_axis].copy()

    @property
    def condition_number(self) -> float:
        return float((self._scales.max() / self._scales.min()) ** 2)

    def check_conditioning(self, index: Optional[int] = None):
        cond = self.condition_number
        if cond > MAX_CONDITION_NUMBER:
            label = f"Gaussian {index}" if index is not None else "Gaussian"
            raise DegenerateCovarianceError(
                f"{label} rejected: covariance condition number {cond:.3e} exceeds {MAX_CONDITION_NUMBER:.0e}",
                cond
            )

    def replace(self, **changes) -> 'GaussianPrimitive':
        """Copy with some fields replaced"""
        fields = {
            'center': self._center,
            'scales': self._scales,
            'rotation': self._rotation,
            'opacity': self._opacity,
            'color': self._color,
        }
        fields.update(changes)
        return GaussianPrimitive(**fields)

    def to_dict(self) -> Dict[str, Any]:
        """
        Convert to dictionary
        """
        return {
            'center': self._center.tolist(),
            'scales': self._scales.tolist(),
            'rotation': self._rotation.tolist(),
            'opacity': self._opacity,
            'color': self._color.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GaussianPrimitive':
        """
        Create from dictionary
        """
        return cls(
            center=data['center'],
            scales=data['scales'],
            rotation=data['rotation'],
            opacity=data['opacity'],
            color=data.get('color', (0.5, 0.5, 0.5))
        )


class Scene:
    """
    Read-only collection of Gaussian primitives stored as parameter arrays
    """

    def __init__(self, centers: np.ndarray, scales: np.ndarray, rotations: np.ndarray,
                 opacities: np.ndarray, colors: np.ndarray):
        count = len(np.asarray(centers).reshape(-1, 3))
        self.centers = _frozen(np.asarray(centers).reshape(count, 3))
        self.scales = _frozen(np.asarray(scales).reshape(count, 3))
        self.rotations = _frozen(np.asarray(rotations).reshape(count, 4))
        self.opacities = _frozen(np.asarray(opacities).reshape(count))
        self.colors = _frozen(np.asarray(colors).reshape(count, 3))
        self._gaussians: Optional[List[GaussianPrimitive]] = None

        # validates every primitive once
        self._gaussians = [
            GaussianPrimitive(self.centers[i], self.scales[i], self.rotations[i],
                              self.opacities[i], self.colors[i])
            for i in range(count)
        ]
        self.check_conditioning()

        rot = quaternion_to_rotation(self.rotations) if count else np.zeros((0, 3, 3))
        inv_sq = 1.0 / self.scales ** 2
        self.rotation_matrices = _frozen(rot)
        self.precisions = _frozen(np.einsum('nik,nk,njk->nij', rot, inv_sq, rot))

    @classmethod
    def from_gaussians(cls, gaussians: Sequence[GaussianPrimitive]) -> 'Scene':
        gaussians = list(gaussians)
        if not gaussians:
            return cls.empty()
        return cls(
            centers=np.stack([g.center for g in gaussians]),
            scales=np.stack([g.scales for g in gaussians]),
            rotations=np.stack([g.rotation for g in gaussians]),
            opacities=np.array([g.opacity for g in gaussians]),
            colors=np.stack([g.color for g in gaussians]),
        )

    @classmethod
    def empty(cls) -> 'Scene':
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 3)))

    def __len__(self) -> int:
        return len(self.opacities)

    def __getitem__(self, index: int) -> GaussianPrimitive:
        return self._gaussians[index]

    def __iter__(self):
        return iter(self._gaussians)

    @property
    def normal_axes(self) -> np.ndarray:
        return np.argmin(self.scales, axis=1) if len(self) else np.zeros(0, dtype=int)

    @property
    def axis_normals(self) -> np.ndarray:
        """Smallest-scale axis of every primitive, shape (N, 3)"""
        if not len(self):
            return np.zeros((0, 3))
        return self.rotation_matrices[np.arange(len(self)), :, self.normal_axes]

    def check_conditioning(self):
        """Raise DegenerateCovarianceError naming the first badly conditioned primitive"""
        for index, gaussian in enumerate(self._gaussians):
            gaussian.check_conditioning(index)

    def with_parameters(self, **changes) -> 'Scene':
        """Copy with some parameter arrays replaced"""
        fields = {
            'centers': self.centers,
            'scales': self.scales,
            'rotations': self.rotations,
            'opacities': self.opacities,
            'colors': self.colors,
        }
        fields.update(changes)
        return Scene(**fields)

    def to_dict(self) -> Dict[str, Any]:
        return {'gaussians': [g.to_dict() for g in self._gaussians]}
