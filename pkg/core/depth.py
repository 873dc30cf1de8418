"""
Median depth search and the baseline depth definitions
"""
from typing import List, Optional, Tuple

import numpy as np

from core.transmittance import (
    compositing_weights,
    profile_arrays,
    total_transmittance_batch,
)
from models.render_result import SENTINEL_DEPTH
from models.restriction import TransmittanceProfile

DEFAULT_BRACKET_R = 0.4
DEFAULT_TRAVERSALS = 5
SEGMENTS = 8
MIN_WEIGHT_SUM = 1e-6


def search_precision(r: float = DEFAULT_BRACKET_R, traversals: int = DEFAULT_TRAVERSALS) -> float:
    """Width of the final median bracket, 2r * 8^-traversals"""
    return 2.0 * r * float(SEGMENTS) ** (-traversals)


def initial_depth_batch(t_star: np.ndarray, g_peak: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    t_star of the first slot where the step residual prod(1 - alpha) drops to 0.5 or below.

    Returns (depth, found); rays that never cross carry the sentinel depth.
    """
    if t_star.shape[-1] == 0:
        shape = t_star.shape[:-1]
        return np.full(shape, SENTINEL_DEPTH), np.zeros(shape, dtype=bool)
    residual = np.cumprod(1.0 - g_peak, axis=-1)
    crossed = residual <= 0.5
    found = crossed.any(axis=-1)
    first = np.argmax(crossed, axis=-1)
    depth = np.take_along_axis(t_star, first[..., None], axis=-1)[..., 0]
    return np.where(found, depth, SENTINEL_DEPTH), found


def median_depth_batch(a: np.ndarray, t_star: np.ndarray, g_peak: np.ndarray,
                       t_init: np.ndarray, found: np.ndarray,
                       r: float = DEFAULT_BRACKET_R, traversals: int = DEFAULT_TRAVERSALS,
                       brackets: Optional[List[Tuple[np.ndarray, np.ndarray]]] = None
                       ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eight-way bracketed search for T(t) = 0.5 on [t_init - r, t_init + r].

    Each traversal probes T at the 7 interior points and keeps the first
    segment whose right end has T <= 0.5. A ray is valid when the initial
    bracket straddles 0.5; invalid rays return t_init unchanged. When
    `brackets` is a list, the (left, right) bracket before every traversal and
    the final one are appended to it.
    """
    start = np.where(found, t_init, 0.0)
    left = start - r
    right = start + r
    ends = total_transmittance_batch(a, t_star, g_peak, np.stack([left, right], axis=1))
    valid = found & (ends[:, 0] >= 0.5) & (ends[:, 1] <= 0.5)

    offsets = np.arange(1, SEGMENTS, dtype=np.float64)
    for _ in range(traversals):
        if brackets is not None:
            brackets.append((left.copy(), right.copy()))
        width = (right - left) / SEGMENTS
        probes = left[:, None] + width[:, None] * offsets[None, :]
        above = total_transmittance_batch(a, t_star, g_peak, probes) > 0.5
        k = above.sum(axis=1)
        left, right = left + k * width, left + (k + 1) * width
    if brackets is not None:
        brackets.append((left.copy(), right.copy()))

    t_med = 0.5 * (left + right)
    return np.where(valid, t_med, t_init), valid


def expected_depth_batch(t_star: np.ndarray, g_peak: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Compositing-weighted mean of t_star; sentinel where the weight sum is below 1e-6"""
    weights = compositing_weights(g_peak)
    total = weights.sum(axis=-1)
    mask = total >= MIN_WEIGHT_SUM
    with np.errstate(divide='ignore', invalid='ignore'):
        depth = np.sum(weights * t_star, axis=-1) / total
    return np.where(mask, depth, SENTINEL_DEPTH), mask


def initial_depth(profile: TransmittanceProfile) -> Optional[float]:
    """Step median of a ray, or None for background"""
    depth, found = initial_depth_batch(profile.t_star[None, :], profile.g_peak[None, :])
    return float(depth[0]) if found[0] else None


def median_depth(profile: TransmittanceProfile, t_init: Optional[float],
                 r: float = DEFAULT_BRACKET_R, traversals: int = DEFAULT_TRAVERSALS) -> Tuple[float, bool]:
    """(t_med, valid) of one ray"""
    if t_init is None:
        return SENTINEL_DEPTH, False
    a, t_star, g_peak = profile_arrays(profile)
    t_med, valid = median_depth_batch(a, t_star, g_peak, np.array([float(t_init)]), np.array([True]),
                                      r=r, traversals=traversals)
    return float(t_med[0]), bool(valid[0])


def median_search_brackets(profile: TransmittanceProfile, t_init: float,
                           r: float = DEFAULT_BRACKET_R,
                           traversals: int = DEFAULT_TRAVERSALS) -> List[Tuple[float, float]]:
    """Every bracket visited by the search, initial to final"""
    a, t_star, g_peak = profile_arrays(profile)
    history: List[Tuple[np.ndarray, np.ndarray]] = []
    median_depth_batch(a, t_star, g_peak, np.array([float(t_init)]), np.array([True]),
                       r=r, traversals=traversals, brackets=history)
    return [(float(left[0]), float(right[0])) for left, right in history]


def expected_depth(profile: TransmittanceProfile) -> float:
    """Expected depth of one ray; the sentinel marks a ray with no weight"""
    if not len(profile):
        return SENTINEL_DEPTH
    depth, _ = expected_depth_batch(profile.t_star[None, :], profile.g_peak[None, :])
    return float(depth[0])
