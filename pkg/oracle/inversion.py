"""
Dense evaluation, grid search and root bracketing references
"""
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from models.restriction import TransmittanceProfile
from oracle.quadrature import transmittance_closed_form
from utils.errors import OracleError

MEDIAN_TOLERANCE = 1e-12


def dense_covariance(scales: Sequence[float], quaternion: Sequence[float]) -> np.ndarray:
    """Sigma built explicitly from a (w, x, y, z) quaternion"""
    w, x, y, z = quaternion
    R = Rotation.from_quat([x, y, z, w]).as_matrix()
    return R @ np.diag(np.asarray(scales, dtype=np.float64) ** 2) @ R.T


def dense_eval_gaussian(center, scales, quaternion, opacity: float, x) -> float:
    """o * exp(-d^T Sigma^-1 d) with the quadratic form from a linear solve"""
    d = np.asarray(x, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    sigma = dense_covariance(scales, quaternion)
    return float(opacity * np.exp(-d @ np.linalg.solve(sigma, d)))


def grid_search_peak(center, scales, quaternion, opacity: float, origin, direction,
                     lower: float, upper: float, samples: int = 10 ** 6) -> Tuple[float, float]:
    """Maximum of G along the ray found by dense sampling, (t, G)"""
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    sigma_inv = np.linalg.inv(dense_covariance(scales, quaternion))
    ts = np.linspace(lower, upper, samples)
    d = origin[None, :] + ts[:, None] * direction[None, :] - np.asarray(center, dtype=np.float64)
    values = opacity * np.exp(-np.einsum('si,ij,sj->s', d, sigma_inv, d))
    best = int(np.argmax(values))
    return float(ts[best]), float(values[best])


def _peak_range(profile: TransmittanceProfile) -> Tuple[float, float]:
    lows = [r.t_star - 8.0 / np.sqrt(r.a) for r in profile.restrictions]
    highs = [r.t_star + 8.0 / np.sqrt(r.a) for r in profile.restrictions]
    return min(lows), max(highs)


def numeric_median(profile: TransmittanceProfile, max_iterations: int = 400) -> Optional[float]:
    """
    Bisection for T(t) = 0.5 to |T - 0.5| < 1e-12; None when T never reaches 0.5
    """
    if not len(profile):
        return None
    residual = float(np.prod([1.0 - r.g_peak for r in profile.restrictions]))
    if residual > 0.5:
        return None

    lo, hi = _peak_range(profile)
    span = max(hi - lo, 1.0)
    while transmittance_closed_form(profile, lo) <= 0.5:
        lo -= span
        span *= 2.0
    span = max(hi - lo, 1.0)
    while transmittance_closed_form(profile, hi) > 0.5:
        hi += span
        span *= 2.0

    for _ in range(max_iterations):
        mid = 0.5 * (lo + hi)
        value = transmittance_closed_form(profile, mid)
        if abs(value - 0.5) < MEDIAN_TOLERANCE or mid in (lo, hi):
            return mid
        if value > 0.5:
            lo = mid
        else:
            hi = mid
    raise OracleError("Bisection did not reach the median tolerance")


def dense_grid_median(profile: TransmittanceProfile, lower: float, upper: float,
                      samples: int = 10 ** 7, chunk: int = 10 ** 6) -> Optional[float]:
    """First grid sample with T <= 0.5, refined by linear interpolation to the crossing"""
    a = np.array([r.a for r in profile.restrictions])
    t_star = np.array([r.t_star for r in profile.restrictions])
    g_peak = np.array([r.g_peak for r in profile.restrictions])
    step = (upper - lower) / (samples - 1)
    previous_t, previous_T = None, None

    for start in range(0, samples, chunk):
        ts = lower + step * np.arange(start, min(start + chunk, samples))
        delta = ts[:, None] - t_star[None, :]
        vac = np.sqrt(1.0 - g_peak * np.exp(-a * delta ** 2))
        T = np.prod(np.where(delta > 0, (1.0 - g_peak) / vac, vac), axis=1)
        below = np.flatnonzero(T <= 0.5)
        if below.size:
            k = int(below[0])
            if k == 0:
                if previous_t is None:
                    return float(ts[0])
                t0, T0 = previous_t, previous_T
            else:
                t0, T0 = float(ts[k - 1]), float(T[k - 1])
            t1, T1 = float(ts[k]), float(T[k])
            return t0 + (T0 - 0.5) / (T0 - T1) * (t1 - t0) if T0 != T1 else t1
        previous_t, previous_T = float(ts[-1]), float(T[-1])
    return None
