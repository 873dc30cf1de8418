"""
Ray Restriction and Transmittance Profile Models
"""
from typing import Dict, Any, List, Optional, Sequence

import numpy as np

from models.gaussian import MAX_OPACITY
from utils.errors import InputValidationError


class RayRestriction:
    """
    One Gaussian seen along one ray: G(t) = g_peak * exp(-a * (t - t_star)^2)
    """

    __slots__ = ('gaussian_id', 'a', 't_star', 'g_peak')

    def __init__(self, gaussian_id: int, a: float, t_star: float, g_peak: float):
        if not a > 0.0:
            raise InputValidationError(f"Restriction curvature must be positive, got {a!r}")
        if not (0.0 <= g_peak <= MAX_OPACITY):
            raise InputValidationError(f"Restriction peak value must lie in [0, {MAX_OPACITY}], got {g_peak!r}")
        if not np.isfinite(t_star):
            raise InputValidationError("Restriction peak location must be finite")
        self.gaussian_id = int(gaussian_id)
        self.a = float(a)
        self.t_star = float(t_star)
        self.g_peak = float(g_peak)

    @property
    def alpha(self) -> float:
        """Splatting alpha of this Gaussian for this ray"""
        return self.g_peak

    def value_at(self, t: float) -> float:
        return self.g_peak * float(np.exp(-self.a * (t - self.t_star) ** 2))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'gaussian_id': self.gaussian_id,
            'a': self.a,
            't_star': self.t_star,
            'g_peak': self.g_peak,
        }

    def __repr__(self) -> str:
        return (f"RayRestriction(gaussian_id={self.gaussian_id}, a={self.a!r}, "
                f"t_star={self.t_star!r}, g_peak={self.g_peak!r})")


class TransmittanceProfile:
    """
    Restrictions of one ray, sorted by t_star with ties broken by gaussian_id.

    `scene` and `ray` are kept when the profile was gathered from a scene so the
    backward pass can reach the primitive parameters.
    """

    def __init__(self, restrictions: Sequence[RayRestriction],
                 colors: Optional[Sequence[Sequence[float]]] = None,
                 normals: Optional[Sequence[Sequence[float]]] = None,
                 scene=None, ray=None):
        count = len(restrictions)
        colors = np.zeros((count, 3)) if colors is None else np.asarray(colors, dtype=np.float64).reshape(count, 3)
        normals = np.zeros((count, 3)) if normals is None else np.asarray(normals, dtype=np.float64).reshape(count, 3)

        for restriction in restrictions:
            if not (0.0 < restriction.g_peak <= MAX_OPACITY):
                raise InputValidationError(
                    f"Profile entries need g_peak in (0, {MAX_OPACITY}], Gaussian {restriction.gaussian_id} has {restriction.g_peak!r}"
                )

        order = sorted(range(count), key=lambda i: (restrictions[i].t_star, restrictions[i].gaussian_id))
        self.restrictions: List[RayRestriction] = [restrictions[i] for i in order]
        self.colors = colors[order] if count else colors
        self.normals = normals[order] if count else normals
        self.scene = scene
        self.ray = ray

        self.a = np.array([r.a for r in self.restrictions], dtype=np.float64)
        self.t_star = np.array([r.t_star for r in self.restrictions], dtype=np.float64)
        self.g_peak = np.array([r.g_peak for r in self.restrictions], dtype=np.float64)
        self.gaussian_ids = np.array([r.gaussian_id for r in self.restrictions], dtype=np.int64)
        for array in (self.colors, self.normals, self.a, self.t_star, self.g_peak, self.gaussian_ids):
            array.flags.writeable = False

    def __len__(self) -> int:
        return len(self.restrictions)

    @property
    def alphas(self) -> np.ndarray:
        return self.g_peak

    def to_dict(self) -> Dict[str, Any]:
        return {
            'restrictions': [r.to_dict() for r in self.restrictions],
            'colors': self.colors.tolist(),
            'normals': self.normals.tolist(),
        }
