"""
Optimizer Service - first-order updates in an unconstrained parameterization
"""
from typing import Dict, Optional

import numpy as np

from models.config import TrainConfig
from models.gaussian import MAX_OPACITY, Scene
from models.gradient_buffer import GradientBuffer
from utils.errors import NumericalError
from utils.logging_config import get_logger

logger = get_logger('services.optimizer')

# optimizer parameter -> (learning rate field, gradient group)
PARAMETER_MAP = {
    'centers': ('center', 'center'),
    'log_scales': ('log_scale', 'scales'),
    'rotations': ('rotation', 'rotation'),
    'logit_opacities': ('logit_opacity', 'opacity'),
    'colors': ('color', 'color'),
}

# sigmoid(-30) ~ 9e-14 keeps opacity strictly positive
MIN_LOGIT_OPACITY = -30.0
MAX_LOGIT_OPACITY = float(np.log(MAX_OPACITY / (1.0 - MAX_OPACITY)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


class OptimizerService:
    """
    SGD with momentum or Adam over centers, log-scales, quaternions,
    logit-opacities and colors.

    Gradients arrive w.r.t. natural parameters and are chained through
    s = exp(l) and o = sigmoid(z). Groups whose learning rate is zero are never
    touched, so an all-zero configuration leaves the scene bitwise unchanged.
    """

    def __init__(self, config: TrainConfig):
        self.config = config
        self.step_count = 0
        self._state: Dict[str, Dict[str, np.ndarray]] = {}
        self.parameters: Optional[Dict[str, np.ndarray]] = None
        self._source: Optional[Scene] = None

    def attach(self, scene: Scene):
        """Take the scene's values as the starting point and reset optimizer state"""
        self._source = scene
        self.parameters = {
            'centers': scene.centers.astype(np.float64),
            'log_scales': np.log(scene.scales),
            'rotations': scene.rotations.astype(np.float64),
            'logit_opacities': np.log(scene.opacities) - np.log1p(-scene.opacities),
            'colors': scene.colors.astype(np.float64),
        }
        self._state = {}
        self.step_count = 0
        logger.debug(f"Optimizer attached to {len(scene)} Gaussian(s) ({self.config.optimizer})")

    def _chained_gradient(self, name: str, buffer: GradientBuffer) -> np.ndarray:
        grad = buffer.group(PARAMETER_MAP[name][1])
        if name == 'log_scales':
            return grad * np.exp(self.parameters['log_scales'])
        if name == 'logit_opacities':
            o = _sigmoid(self.parameters['logit_opacities'])
            return grad * o * (1.0 - o)
        return grad

    def _direction(self, name: str, grad: np.ndarray) -> np.ndarray:
        state = self._state.setdefault(name, {})
        if self.config.optimizer == 'adam':
            beta1, beta2 = self.config.adam_betas
            m = state.get('m', np.zeros_like(grad))
            v = state.get('v', np.zeros_like(grad))
            m = beta1 * m + (1.0 - beta1) * grad
            v = beta2 * v + (1.0 - beta2) * grad * grad
            state['m'], state['v'] = m, v
            m_hat = m / (1.0 - beta1 ** self.step_count)
            v_hat = v / (1.0 - beta2 ** self.step_count)
            return m_hat / (np.sqrt(v_hat) + self.config.adam_eps)
        if self.config.momentum > 0:
            velocity = self.config.momentum * state.get('velocity', np.zeros_like(grad)) + grad
            state['velocity'] = velocity
            return velocity
        return grad

    def step(self, buffer: GradientBuffer) -> Scene:
        """
        Apply one update and return the new scene

        Raises:
            NumericalError: when a gradient or an updated parameter is not finite
        """
        if self.parameters is None:
            raise RuntimeError("attach() a scene before stepping")
        if not buffer.finalized:
            raise ValueError("Gradient buffer must be finalized before an update")
        buffer.check_finite()
        self.step_count += 1

        rates = self.config.learning_rates
        changed = []
        for name, (rate_field, _) in PARAMETER_MAP.items():
            rate = getattr(rates, rate_field)
            if rate == 0.0:
                continue
            grad = self._chained_gradient(name, buffer)
            updated = self.parameters[name] - rate * self._direction(name, grad)
            if not np.all(np.isfinite(updated)):
                raise NumericalError(f"Update produced non-finite values in '{name}'")
            self.parameters[name] = updated
            changed.append(name)

        if not changed:
            return self._source
        self._project()
        self._source = self.scene(changed)
        return self._source

    def _project(self):
        """Keep quaternions unit, opacity inside (0, 1 - eps_o] and colors in [0, 1]"""
        q = self.parameters['rotations']
        norm = np.linalg.norm(q, axis=1, keepdims=True)
        if np.any(norm < 1e-12):
            raise NumericalError("A quaternion collapsed to zero during optimization")
        self.parameters['rotations'] = q / norm
        self.parameters['logit_opacities'] = np.clip(self.parameters['logit_opacities'],
                                                     MIN_LOGIT_OPACITY, MAX_LOGIT_OPACITY)
        self.parameters['colors'] = np.clip(self.parameters['colors'], 0.0, 1.0)

    def scene(self, changed=None) -> Scene:
        """Activated scene; groups outside `changed` are copied from the previous scene untouched"""
        p = self.parameters
        changed = set(PARAMETER_MAP) if changed is None or self._source is None else set(changed)
        source = self._source
        return Scene(
            centers=p['centers'] if 'centers' in changed else source.centers,
            scales=np.exp(p['log_scales']) if 'log_scales' in changed else source.scales,
            rotations=p['rotations'] if 'rotations' in changed else source.rotations,
            opacities=(np.minimum(_sigmoid(p['logit_opacities']), MAX_OPACITY)
                       if 'logit_opacities' in changed else source.opacities),
            colors=p['colors'] if 'colors' in changed else source.colors,
        )
