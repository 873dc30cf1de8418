"""
Gradient Buffer Model - per-Gaussian loss gradients
"""
from typing import Dict, Any, Iterable

import numpy as np

from utils.errors import NumericalError

PARAMETER_GROUPS = ('center', 'scales', 'rotation', 'opacity', 'color')

# Per-ray contributions land in the staging groups and are mapped onto
# scales/rotation once per pass
STAGING_GROUPS = ('precision', 'rotation_matrix')

_GROUP_SHAPES = {
    'center': (3,),
    'scales': (3,),
    'rotation': (4,),
    'opacity': (),
    'color': (3,),
    'precision': (3, 3),
    'rotation_matrix': (3, 3),
}


class GradientBuffer:
    """
    Zero-initialized accumulators for dL/d(center, scales, rotation, opacity, color).

    Gradients are taken w.r.t. the natural parameters (linear scales, opacity in
    (0, 1)); the optimizer converts them to its own parameterization.
    Accumulation goes through `np.add.at`, which applies repeated indices in
    order, so a fixed call order gives bitwise-reproducible sums.
    """

    def __init__(self, count: int):
        self.count = int(count)
        self.center = np.zeros((self.count, 3))
        self.scales = np.zeros((self.count, 3))
        self.rotation = np.zeros((self.count, 4))
        self.opacity = np.zeros(self.count)
        self.color = np.zeros((self.count, 3))
        self.precision = np.zeros((self.count, 3, 3))
        self.rotation_matrix = np.zeros((self.count, 3, 3))
        self.skipped_pixels = 0
        self.finalized = False

    def group(self, name: str) -> np.ndarray:
        if name not in _GROUP_SHAPES:
            raise KeyError(f"Unknown parameter group {name!r}")
        return getattr(self, name)

    def accumulate(self, name: str, gaussian_ids: np.ndarray, values: np.ndarray):
        """Add per-entry gradient rows into the named group"""
        values = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise NumericalError(f"Non-finite gradient contribution for group '{name}'")
        np.add.at(self.group(name), np.asarray(gaussian_ids, dtype=np.int64), values)

    def merge(self, other: 'GradientBuffer'):
        """Add another buffer into this one"""
        if other.count != self.count:
            raise ValueError(f"Cannot merge buffers of {other.count} and {self.count} Gaussians")
        for name in PARAMETER_GROUPS + STAGING_GROUPS:
            self.group(name)[...] += other.group(name)
        self.skipped_pixels += other.skipped_pixels

    @classmethod
    def reduce(cls, count: int, partials: Iterable['GradientBuffer']) -> 'GradientBuffer':
        """Sum partial buffers in the order given"""
        total = cls(count)
        for partial in partials:
            total.merge(partial)
        return total

    def has_staged(self) -> bool:
        return bool(np.any(self.precision) or np.any(self.rotation_matrix))

    def clear_staging(self):
        self.precision[...] = 0.0
        self.rotation_matrix[...] = 0.0

    def check_finite(self):
        for name in PARAMETER_GROUPS + STAGING_GROUPS:
            if not np.all(np.isfinite(self.group(name))):
                raise NumericalError(f"Gradient buffer group '{name}' holds NaN or Inf")

    def finalize(self, rotations: np.ndarray) -> 'GradientBuffer':
        """
        Project quaternion gradients onto the tangent space of the unit sphere.

        Idempotent: a finalized buffer is returned unchanged. Staged precision
        and rotation-matrix gradients must be resolved first.
        """
        if self.finalized:
            return self
        if self.has_staged():
            raise ValueError("Resolve staged precision gradients before finalizing")
        q = np.asarray(rotations, dtype=np.float64).reshape(self.count, 4)
        radial = np.sum(self.rotation * q, axis=1, keepdims=True)
        self.rotation = self.rotation - radial * q
        self.check_finite()
        self.finalized = True
        return self

    def scaled(self, factor: float) -> 'GradientBuffer':
        result = GradientBuffer(self.count)
        for name in PARAMETER_GROUPS + STAGING_GROUPS:
            result.group(name)[...] = self.group(name) * factor
        result.skipped_pixels = self.skipped_pixels
        result.finalized = self.finalized
        return result

    def flat(self) -> np.ndarray:
        """All groups concatenated per Gaussian in PARAMETER_GROUPS order, shape (N, 14)"""
        return np.concatenate([
            self.center, self.scales, self.rotation, self.opacity[:, None], self.color
        ], axis=1)

    def max_abs(self) -> float:
        return float(np.abs(self.flat()).max()) if self.count else 0.0

    def nonzero_gaussians(self) -> np.ndarray:
        """Boolean mask of Gaussians whose gradient is not identically zero"""
        if not self.count:
            return np.zeros(0, dtype=bool)
        return np.any(self.flat() != 0.0, axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'count': self.count,
            'skipped_pixels': self.skipped_pixels,
            **{name: self.group(name).tolist() for name in PARAMETER_GROUPS},
        }
