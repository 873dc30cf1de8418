"""
Scene File Model - the standard splatting PLY vertex layout
"""
from typing import Dict, Any, List

import numpy as np

from models.gaussian import Scene, MAX_OPACITY
from utils.errors import InputValidationError

SH_C0 = 0.28209479177387814

REQUIRED_PROPERTIES = (
    'x', 'y', 'z',
    'scale_0', 'scale_1', 'scale_2',
    'rot_0', 'rot_1', 'rot_2', 'rot_3',
    'opacity',
    'f_dc_0', 'f_dc_1', 'f_dc_2',
)

# written by save_ply; normals are unused but expected by external viewers
WRITE_PROPERTIES = ('x', 'y', 'z', 'nx', 'ny', 'nz',
                    'f_dc_0', 'f_dc_1', 'f_dc_2', 'opacity',
                    'scale_0', 'scale_1', 'scale_2',
                    'rot_0', 'rot_1', 'rot_2', 'rot_3')

MIN_OPACITY = 1e-12


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _logit(p: np.ndarray) -> np.ndarray:
    return np.log(p) - np.log1p(-p)


class SceneFile:
    """
    Parsed PLY vertex records and the scene they activate to.

    `vertices` keeps the stored (pre-activation) payload so that writing an
    unmodified file back reproduces every payload field bitwise.
    """

    def __init__(self, vertices: np.ndarray, scene: Scene):
        self.vertices = vertices
        self.scene = scene

    @property
    def count(self) -> int:
        return len(self.vertices)

    @property
    def property_names(self) -> List[str]:
        return list(self.vertices.dtype.names or ())

    @classmethod
    def from_vertices(cls, vertices: np.ndarray) -> 'SceneFile':
        """Apply activations: exp scales, normalized quaternions, sigmoid opacity, SH DC to RGB"""
        names = vertices.dtype.names or ()
        missing = [p for p in REQUIRED_PROPERTIES if p not in names]
        if missing:
            raise InputValidationError(f"PLY vertex element lacks required properties: {', '.join(missing)}")

        def column(*props):
            return np.stack([np.asarray(vertices[p], dtype=np.float64) for p in props], axis=-1)

        centers = column('x', 'y', 'z')
        scales = np.exp(column('scale_0', 'scale_1', 'scale_2'))
        quats = column('rot_0', 'rot_1', 'rot_2', 'rot_3')
        norms = np.linalg.norm(quats, axis=1, keepdims=True)
        bad = np.flatnonzero(~(norms[:, 0] > 0) | ~np.all(np.isfinite(quats), axis=1))
        if bad.size:
            raise InputValidationError(f"Vertex {int(bad[0])} has a zero or non-finite rotation quaternion")
        quats = quats / norms

        opacities = np.clip(_sigmoid(np.asarray(vertices['opacity'], dtype=np.float64)), MIN_OPACITY, MAX_OPACITY)
        colors = np.clip(0.5 + SH_C0 * column('f_dc_0', 'f_dc_1', 'f_dc_2'), 0.0, 1.0)

        scene = Scene(centers, scales, quats, opacities, colors)
        return cls(vertices, scene)

    @classmethod
    def from_scene(cls, scene: Scene) -> 'SceneFile':
        """Inverse activations into a float32 payload"""
        count = len(scene)
        vertices = np.zeros(count, dtype=[(name, '<f4') for name in WRITE_PROPERTIES])
        for axis, name in enumerate('xyz'):
            vertices[name] = scene.centers[:, axis]
        log_scales = np.log(scene.scales)
        dc = (scene.colors - 0.5) / SH_C0
        for k in range(3):
            vertices[f'scale_{k}'] = log_scales[:, k]
            vertices[f'f_dc_{k}'] = dc[:, k]
        for k in range(4):
            vertices[f'rot_{k}'] = scene.rotations[:, k]
        vertices['opacity'] = _logit(scene.opacities)
        return cls.from_vertices(vertices)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'count': self.count,
            'properties': self.property_names,
        }
