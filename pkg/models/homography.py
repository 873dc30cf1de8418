"""
Plane-Induced Homography Model
"""
from typing import Sequence

import numpy as np

from utils.errors import InputValidationError

MIN_DETERMINANT = 1e-12
MIN_HOMOGENEOUS_W = 1e-12


class Homography:
    """
    3x3 map from reference pixel homogeneous coordinates to neighbor pixel coordinates
    """

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.array(matrix, dtype=np.float64).reshape(3, 3)
        det = float(np.linalg.det(self.matrix))
        if not np.isfinite(det) or abs(det) <= MIN_DETERMINANT:
            raise InputValidationError(f"Homography is not invertible (det {det:.3e})")
        self.matrix.flags.writeable = False

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))

    def inverse(self) -> 'Homography':
        return Homography(np.linalg.inv(self.matrix))

    def compose(self, other: 'Homography') -> 'Homography':
        """self after other"""
        return Homography(self.matrix @ other.matrix)

    def apply(self, pixels: Sequence[float]) -> np.ndarray:
        """
        Warp pixel coordinates of shape (..., 2).

        Points mapped to infinity (w <= 1e-12) come back as +inf.
        """
        pixels = np.asarray(pixels, dtype=np.float64)
        homogeneous = np.concatenate([pixels, np.ones(pixels.shape[:-1] + (1,))], axis=-1)
        warped = homogeneous @ self.matrix.T
        w = warped[..., 2:3]
        at_infinity = w <= MIN_HOMOGENEOUS_W
        with np.errstate(divide='ignore', invalid='ignore'):
            result = warped[..., :2] / np.where(at_infinity, 1.0, w)
        return np.where(at_infinity, np.inf, result)

    def to_dict(self):
        return {'matrix': self.matrix.tolist()}
