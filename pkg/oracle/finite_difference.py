"""
Central finite-difference gradients with a step sweep
"""
from typing import Callable, Optional, Sequence

import numpy as np

from utils.errors import OracleError
from utils.logging_config import get_logger

logger = get_logger('oracle.finite_difference')

DEFAULT_STEPS = (1e-4, 1e-5, 1e-6)


def _evaluate(func: Callable[[np.ndarray], Optional[float]], x: np.ndarray) -> float:
    value = func(x)
    if value is None or not np.isfinite(value):
        raise OracleError(f"Function is not finite near the evaluation point (got {value!r})")
    return float(value)


def central_difference(func: Callable[[np.ndarray], Optional[float]], x: np.ndarray,
                       index: int, step: float) -> float:
    forward = x.copy()
    backward = x.copy()
    forward[index] += step
    backward[index] -= step
    return (_evaluate(func, forward) - _evaluate(func, backward)) / (2.0 * step)


def fd_gradient(func: Callable[[np.ndarray], Optional[float]], params: Sequence[float],
                steps: Sequence[float] = DEFAULT_STEPS) -> np.ndarray:
    """
    Central-difference gradient of func at params.

    Every coordinate is differenced at each step of the sweep; the estimate of
    the adjacent pair of steps that agree best is returned (the larger step of
    that pair). A None or non-finite evaluation raises OracleError.
    """
    x = np.asarray(params, dtype=np.float64).copy()
    _evaluate(func, x)
    steps = sorted(steps, reverse=True)
    grad = np.zeros_like(x)

    for index in range(len(x)):
        estimates = [central_difference(func, x, index, h) for h in steps]
        if len(estimates) == 1:
            grad[index] = estimates[0]
            continue
        gaps = [abs(estimates[k] - estimates[k + 1]) for k in range(len(estimates) - 1)]
        best = int(np.argmin(gaps))
        grad[index] = estimates[best]
        logger.debug(f"FD coordinate {index}: steps {steps}, estimates {estimates}, picked {best}")
    return grad


def relative_error(analytic, numeric, floor: float = 1e-4) -> np.ndarray:
    """|a - f| / max(|a|, |f|, floor), elementwise"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale
