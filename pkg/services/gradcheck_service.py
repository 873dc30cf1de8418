"""
Gradcheck Service - analytic median-depth gradients against finite differences
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional

import numpy as np

from core.gradients import depth_backward, finalize_gradients
from core.transmittance import build_profile
from models.camera import Ray
from models.gaussian import Scene
from models.gradcheck_report import GRADCHECK_TOLERANCE, GradcheckReport, RayGradcheck
from models.gradient_buffer import GradientBuffer
from models.restriction import TransmittanceProfile
from oracle.finite_difference import fd_gradient, relative_error
from oracle.inversion import numeric_median
from utils.errors import OracleError
from utils.logging_config import get_logger

logger = get_logger('services.gradcheck')

# (group, slice of the per-Gaussian parameter vector)
PARAMETER_SLICES = (
    ('center', slice(0, 3)),
    ('scales', slice(3, 6)),
    ('rotation', slice(6, 10)),
    ('opacity', slice(10, 11)),
)

# Gather every primitive near the ray so perturbed parameters never change which ones contribute;
# the sphere prefilter is disabled by a radius of a million largest scales
GATHER_CUTOFF = 1e-12
GATHER_NEAR = 1e-6
GATHER_SIGMAS = 1e6
# Gradient entries smaller than this are compared by absolute error
RELATIVE_FLOOR = 1e-4


class GradcheckService:
    """
    Finite-difference suite for dt_med / dtheta.

    The reference median comes from bisection to 1e-12 so that the finite
    differences are not dominated by the search precision of the renderer.
    Rays are aimed at randomly chosen Gaussians with a seeded generator.
    """

    def __init__(self, max_gaussians_per_ray: int = 4, workers: int = 1):
        self.max_gaussians_per_ray = max_gaussians_per_ray
        self.workers = workers

    @staticmethod
    def profile(scene: Scene, ray: Ray) -> TransmittanceProfile:
        return build_profile(scene, ray, alpha_cutoff=GATHER_CUTOFF, near=GATHER_NEAR,
                             prefilter_sigmas=GATHER_SIGMAS)

    @staticmethod
    def parameter_vector(scene: Scene, index: int) -> np.ndarray:
        return np.concatenate([scene.centers[index], scene.scales[index], scene.rotations[index],
                               [scene.opacities[index]]])

    @staticmethod
    def with_vector(scene: Scene, index: int, vector: np.ndarray) -> Scene:
        centers = scene.centers.copy()
        scales = scene.scales.copy()
        rotations = scene.rotations.copy()
        opacities = scene.opacities.copy()
        centers[index] = vector[0:3]
        scales[index] = vector[3:6]
        rotations[index] = vector[6:10] / np.linalg.norm(vector[6:10])
        opacities[index] = vector[10]
        return scene.with_parameters(centers=centers, scales=scales, rotations=rotations, opacities=opacities)

    def sample_rays(self, scene: Scene, seed: int, count: int) -> List[Ray]:
        rng = np.random.default_rng(seed)
        reach = 6.0 * float(scene.scales.max()) + 1.0
        rays = []
        for _ in range(count):
            target = scene.centers[int(rng.integers(len(scene)))]
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            jitter = rng.normal(size=3) * 0.25 * float(scene.scales.min())
            jitter -= np.dot(jitter, direction) * direction
            rays.append(Ray(target + jitter - reach * direction, direction))
        return rays

    def check_ray(self, scene: Scene, ray: Ray) -> Optional[RayGradcheck]:
        """None when the ray never reaches transmittance 0.5"""
        profile = self.profile(scene, ray)
        t_med = numeric_median(profile)
        if t_med is None:
            return None

        buffer = GradientBuffer(len(scene))
        if not depth_backward(profile, t_med, 1.0, buffer):
            return None
        finalize_gradients(buffer, scene)
        analytic = buffer.flat()

        ids = [int(i) for i in profile.gaussian_ids[:self.max_gaussians_per_ray]]
        group_errors: Dict[str, float] = {name: 0.0 for name, _ in PARAMETER_SLICES}
        for index in ids:
            def median_of(vector, index=index):
                return numeric_median(self.profile(self.with_vector(scene, index, vector), ray))

            numeric = fd_gradient(median_of, self.parameter_vector(scene, index))
            expected = analytic[index, :11]
            for name, part in PARAMETER_SLICES:
                error = float(relative_error(expected[part], numeric[part], RELATIVE_FLOOR).max())
                group_errors[name] = max(group_errors[name], error)

        return RayGradcheck(
            origin=ray.origin.tolist(),
            direction=ray.direction.tolist(),
            median_depth=t_med,
            gaussians=ids,
            max_relative_error=max(group_errors.values()),
            group_errors=group_errors,
        )

    def run(self, scene: Scene, seed: int = 7, rays: int = 4,
            tolerance: float = GRADCHECK_TOLERANCE) -> GradcheckReport:
        """
        Check `rays` random rays through the scene

        Raises:
            OracleError: the finite-difference reference failed on a ray
        """
        logger.info(f"Gradcheck over {rays} ray(s) with seed {seed}")
        sampled = self.sample_rays(scene, seed, rays)

        def check(ray):
            try:
                return self.check_ray(scene, ray)
            except OracleError:
                logger.error(f"Finite differences failed on ray {ray.origin.tolist()} -> {ray.direction.tolist()}")
                raise

        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as executor:
                results = list(executor.map(check, sampled))
        else:
            results = [check(ray) for ray in sampled]

        report = GradcheckReport(seed=seed, tolerance=tolerance,
                                 rays=[r for r in results if r is not None],
                                 skipped_rays=sum(r is None for r in results))
        level = logger.info if report.passed else logger.warning
        level(f"Gradcheck max relative error {report.max_relative_error:.3e} "
              f"over {len(report.rays)} ray(s), {report.skipped_rays} skipped")
        return report
