"""
Consistency Report Model - cycle reprojection statistics between two views
"""
from typing import Dict, Any

import numpy as np


class ConsistencyReport:
    """
    Per-pixel cycle error image with summary statistics over jointly valid pixels.

    Invalid pixels hold +inf in `errors`.
    """

    def __init__(self, errors: np.ndarray, valid_mask: np.ndarray):
        self.errors = np.asarray(errors, dtype=np.float64)
        self.valid_mask = np.asarray(valid_mask, dtype=bool)
        valid_errors = self.errors[self.valid_mask]

        total = self.valid_mask.size
        self.valid_fraction = float(self.valid_mask.sum()) / total if total else 0.0
        if valid_errors.size:
            self.mean_error = float(valid_errors.mean())
            self.median_error = float(np.median(valid_errors))
            self.max_error = float(valid_errors.max())
        else:
            self.mean_error = 0.0
            self.median_error = 0.0
            self.max_error = 0.0

    @property
    def valid_count(self) -> int:
        return int(self.valid_mask.sum())

    def scaled_errors(self, max_error: float = None) -> np.ndarray:
        """Errors mapped to [0, 1] for visualization; invalid pixels map to 1"""
        limit = max_error if max_error is not None else (self.max_error or 1.0)
        scaled = np.clip(self.errors / limit, 0.0, 1.0)
        return np.where(self.valid_mask, scaled, 1.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'valid_fraction': self.valid_fraction,
            'valid_pixels': self.valid_count,
            'mean_error': self.mean_error,
            'median_error': self.median_error,
            'max_error': self.max_error,
            'height': int(self.errors.shape[0]),
            'width': int(self.errors.shape[1]),
        }
