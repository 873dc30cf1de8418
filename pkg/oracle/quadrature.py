"""
Adaptive quadrature of the volume-rendering integral
"""
from typing import Callable, List, Optional, Sequence

import numpy as np

from models.config import QuadratureSpec
from models.restriction import TransmittanceProfile
from utils.errors import OracleError

PEAK_SUPPORT = 8.0


def _terms(profile: TransmittanceProfile):
    return (np.array([r.a for r in profile.restrictions]),
            np.array([r.t_star for r in profile.restrictions]),
            np.array([r.g_peak for r in profile.restrictions]))


def _occupancy(a, t_star, g_peak, t):
    return g_peak * np.exp(-a * (t - t_star) ** 2)


def attenuation_total(profile: TransmittanceProfile, t: float) -> float:
    """Sum over Gaussians of |d/dt log sqrt(1 - G_i(t))|"""
    a, t_star, g_peak = _terms(profile)
    G = _occupancy(a, t_star, g_peak, t)
    return float(np.sum(a * np.abs(t - t_star) * G / (1.0 - G)))


def transmittance_closed_form(profile: TransmittanceProfile, t: float) -> float:
    """Independent rewrite of the per-Gaussian product, used only inside the oracles"""
    total = 1.0
    for r in profile.restrictions:
        vac = np.sqrt(1.0 - r.g_peak * np.exp(-r.a * (t - r.t_star) ** 2))
        total *= vac if t <= r.t_star else (1.0 - r.g_peak) / vac
    return float(total)


def free_flight_density(profile: TransmittanceProfile, t: float) -> float:
    """p(t) = T(t) sigma(t), the density of first-collision distances"""
    return transmittance_closed_form(profile, t) * attenuation_total(profile, t)


def default_spec(profile: TransmittanceProfile, tolerance: float = 1e-10) -> QuadratureSpec:
    """Bounds covering every peak +- 8 / sqrt(a)"""
    a, t_star, _ = _terms(profile)
    if not len(a):
        return QuadratureSpec(lower=0.0, upper=1.0, tolerance=tolerance)
    reach = PEAK_SUPPORT / np.sqrt(a)
    return QuadratureSpec(lower=float(np.min(t_star - reach)), upper=float(np.max(t_star + reach)),
                          tolerance=tolerance)


def adaptive_simpson(func: Callable[[float], np.ndarray], lower: float, upper: float,
                     tolerance: float, max_subdivisions: int) -> np.ndarray:
    """
    Adaptive Simpson integration with Richardson correction, works on vector-valued integrands
    """
    def simpson(fa, fm, fb, width):
        return width / 6.0 * (fa + 4.0 * fm + fb)

    fa = np.asarray(func(lower), dtype=np.float64)
    fb = np.asarray(func(upper), dtype=np.float64)
    mid = 0.5 * (lower + upper)
    fm = np.asarray(func(mid), dtype=np.float64)
    stack = [(lower, upper, fa, fm, fb, simpson(fa, fm, fb, upper - lower), tolerance)]
    total = np.zeros_like(fa)
    splits = 0

    while stack:
        lo, hi, f_lo, f_mid, f_hi, whole, tol = stack.pop()
        mid = 0.5 * (lo + hi)
        left_mid = 0.5 * (lo + mid)
        right_mid = 0.5 * (mid + hi)
        f_lm = np.asarray(func(left_mid), dtype=np.float64)
        f_rm = np.asarray(func(right_mid), dtype=np.float64)
        left = simpson(f_lo, f_lm, f_mid, mid - lo)
        right = simpson(f_mid, f_rm, f_hi, hi - mid)
        error = left + right - whole
        if np.max(np.abs(error)) <= 15.0 * tol or (hi - lo) < 1e-12:
            total = total + left + right + error / 15.0
            continue
        splits += 1
        if splits > max_subdivisions:
            raise OracleError(f"Quadrature exhausted {max_subdivisions} subdivisions")
        stack.append((lo, mid, f_lo, f_lm, f_mid, left, tol / 2.0))
        stack.append((mid, hi, f_mid, f_rm, f_hi, right, tol / 2.0))
    return total


def integrate(func: Callable[[float], np.ndarray], spec: QuadratureSpec,
              breakpoints: Optional[Sequence[float]] = None) -> np.ndarray:
    """Integrate between the QuadratureSpec bounds, splitting at breakpoints where the integrand has kinks"""
    edges: List[float] = [spec.lower]
    for point in sorted(breakpoints or ()):
        if spec.lower < point < spec.upper:
            edges.append(float(point))
    edges.append(spec.upper)
    pieces = len(edges) - 1
    result = None
    for lo, hi in zip(edges[:-1], edges[1:]):
        part = adaptive_simpson(func, lo, hi, spec.tolerance / pieces, spec.max_subdivisions)
        result = part if result is None else result + part
    return result


def quadrature_color(profile: TransmittanceProfile, color, spec: Optional[QuadratureSpec] = None) -> np.ndarray:
    """C = integral of T(t) sigma(t) c dt"""
    color = np.asarray(color, dtype=np.float64)
    if not len(profile):
        return np.zeros_like(color)
    spec = spec or default_spec(profile)
    breaks = [r.t_star for r in profile.restrictions]
    weight = integrate(lambda t: free_flight_density(profile, t), spec, breaks)
    return float(weight) * color


def free_flight_mass(profile: TransmittanceProfile, spec: Optional[QuadratureSpec] = None) -> float:
    """Integral of p(t); equals 1 - T(+inf) for bounds covering all support"""
    if not len(profile):
        return 0.0
    spec = spec or default_spec(profile)
    return float(integrate(lambda t: free_flight_density(profile, t), spec, [r.t_star for r in profile.restrictions]))


def transmittance_by_quadrature(profile: TransmittanceProfile, t: float,
                                spec: Optional[QuadratureSpec] = None) -> float:
    """exp(-integral of sigma from the lower bound to t)"""
    if not len(profile):
        return 1.0
    base = spec or default_spec(profile)
    if t <= base.lower:
        return 1.0
    bounded = QuadratureSpec(lower=base.lower, upper=float(t), tolerance=base.tolerance,
                             max_subdivisions=base.max_subdivisions)
    optical_depth = integrate(lambda s: attenuation_total(profile, s), bounded,
                              [r.t_star for r in profile.restrictions])
    return float(np.exp(-optical_depth))
