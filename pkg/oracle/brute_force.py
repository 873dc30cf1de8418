"""
Exhaustive, exact and extended-precision references
"""
from fractions import Fraction
from typing import List, Optional, Sequence

import mpmath
import numpy as np

from utils.errors import InputValidationError


def exhaustive_chamfer(cloud_a: np.ndarray, cloud_b: np.ndarray, chunk: int = 256) -> float:
    """Chamfer distance from all pairwise distances"""
    cloud_a = np.asarray(cloud_a, dtype=np.float64).reshape(-1, 3)
    cloud_b = np.asarray(cloud_b, dtype=np.float64).reshape(-1, 3)
    if not len(cloud_a) or not len(cloud_b):
        raise InputValidationError("Chamfer distance needs two non-empty clouds")

    def nearest(src, dst):
        out = np.empty(len(src))
        for start in range(0, len(src), chunk):
            block = src[start:start + chunk]
            dist = np.sqrt(np.sum((block[:, None, :] - dst[None, :, :]) ** 2, axis=2))
            out[start:start + chunk] = dist.min(axis=1)
        return out

    return 0.5 * float(nearest(cloud_a, cloud_b).mean()) + 0.5 * float(nearest(cloud_b, cloud_a).mean())


def extended_precision_composite(alphas: Sequence[float], colors: Sequence[Sequence[float]],
                                 digits: int = 50) -> List[float]:
    """sum_i c_i alpha_i prod_{j<i} (1 - alpha_j) evaluated with `digits` significant digits"""
    with mpmath.workdps(digits):
        total = [mpmath.mpf(0)] * 3
        survive = mpmath.mpf(1)
        for alpha, color in zip(alphas, colors):
            alpha = mpmath.mpf(float(alpha))
            for channel in range(3):
                total[channel] += mpmath.mpf(float(color[channel])) * alpha * survive
            survive *= 1 - alpha
        return [float(value) for value in total]


def direct_weights(alphas: Sequence[float]) -> List[float]:
    """Compositing weights by explicit loops"""
    weights = []
    for i, alpha in enumerate(alphas):
        product = 1.0
        for j in range(i):
            product *= 1.0 - alphas[j]
        weights.append(alpha * product)
    return weights


def direct_weighted_sum(alphas: Sequence[float], vectors: Sequence[Sequence[float]]) -> np.ndarray:
    total = np.zeros(3)
    for weight, vector in zip(direct_weights(alphas), vectors):
        total = total + weight * np.asarray(vector, dtype=np.float64)
    return total


def direct_expected_depth(alphas: Sequence[float], t_stars: Sequence[float]) -> Optional[float]:
    weights = direct_weights(alphas)
    total = sum(weights)
    if total < 1e-6:
        return None
    return sum(w * t for w, t in zip(weights, t_stars)) / total


def direct_normal_consistency(alphas: Sequence[float], normals: Sequence[Sequence[float]], target) -> float:
    target = np.asarray(target, dtype=np.float64)
    return float(sum(w * (1.0 - float(np.dot(n, target))) for w, n in zip(direct_weights(alphas), normals)))


def exact_step_crossing(alphas: Sequence) -> Optional[int]:
    """
    Index of the first prefix product prod(1 - alpha) that is <= 1/2, in exact
    rational arithmetic; alphas may be strings, ints or Fractions
    """
    residual = Fraction(1)
    for index, alpha in enumerate(alphas):
        residual *= 1 - Fraction(alpha)
        if residual <= Fraction(1, 2):
            return index
    return None
