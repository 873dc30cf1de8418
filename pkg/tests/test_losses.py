import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from core.losses import (
    confidence_weight, cycle_error, depth_to_normal, depth_to_normal_backward, gaussian_window,
    multiview_loss, ncc, normal_consistency_image, normal_consistency_loss, photometric_loss,
    photometric_loss_with_gradient, plane_homography, ssim,
)
from core.transmittance import compositing_weights
from models.camera import Camera
from models.config import LossWeights, RenderOptions
from models.gaussian import MAX_OPACITY
from models.homography import Homography
from models.training import TrainingView
from oracle.brute_force import direct_normal_consistency
from services.loss_service import LossService, nearest_neighbor_views
from services.render_service import RenderService
from utils.errors import DegeneratePlaneError, InputValidationError
from utils.synthetic_scenes import WORLD_UP, plane_depth, ring_cameras, two_gaussian_scene

K = np.array([[20.0, 0.0, 16.0], [0.0, 20.0, 16.0], [0.0, 0.0, 1.0]])


def loop_ssim(x, y, c1=0.01 ** 2, c2=0.03 ** 2):
    """Mean SSIM of one channel with explicit zero-padded windows"""
    kernel = gaussian_window()
    window = np.outer(kernel, kernel)
    half = len(kernel) // 2
    px = np.pad(x, half)
    py = np.pad(y, half)
    values = []
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            wx = px[i:i + 2 * half + 1, j:j + 2 * half + 1]
            wy = py[i:i + 2 * half + 1, j:j + 2 * half + 1]
            mx, my = np.sum(window * wx), np.sum(window * wy)
            vx = np.sum(window * wx * wx) - mx * mx
            vy = np.sum(window * wy * wy) - my * my
            cov = np.sum(window * wx * wy) - mx * my
            values.append((2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(values))


def texture(points):
    x, y = points[..., 0], points[..., 1]
    return 0.5 + 0.2 * np.sin(1.2 * x) * np.cos(0.9 * y + 0.4) + 0.1 * np.sin(0.7 * x + 0.5 * y)


def plane_view(eye):
    camera = Camera.look_at(eye, (0.0, 0.0, 0.0), WORLD_UP, 20.0, 20.0, 32, 32)
    depth, mask = plane_depth(camera, (0.0, 0.0, 1.0), 0.0)
    points = camera.center + depth[..., None] * camera.pixel_directions(camera.pixel_grid())
    return camera, texture(points), depth, mask


class TestPhotometricLoss:

    def test_identical_images(self, rng):
        image = rng.uniform(size=(12, 10, 3))
        assert photometric_loss(image, image) == pytest.approx(0.0, abs=1e-12)

    def test_ssim_matches_explicit_windows(self, rng):
        x = rng.uniform(size=(9, 13))
        y = np.clip(x + 0.1 * rng.normal(size=x.shape), 0.0, 1.0)
        assert ssim(x, y) == pytest.approx(loop_ssim(x, y), rel=1e-10)

    def test_pure_l1_weighting(self, rng):
        x = rng.uniform(size=(6, 6, 3))
        assert photometric_loss(x, x + 0.25, ssim_lambda=0.0) == pytest.approx(0.25, rel=1e-12)

    def test_gradient_matches_finite_differences(self, rng):
        reference = rng.uniform(0.2, 0.8, size=(8, 9, 3))
        rendered = reference + rng.choice([-0.1, 0.1], size=reference.shape)
        _, grad = photometric_loss_with_gradient(rendered, reference)
        h = 1e-6
        for index in [(0, 0, 0), (3, 4, 1), (7, 8, 2), (5, 1, 0)]:
            plus, minus = rendered.copy(), rendered.copy()
            plus[index] += h
            minus[index] -= h
            numeric = (photometric_loss(plus, reference) - photometric_loss(minus, reference)) / (2 * h)
            assert grad[index] == pytest.approx(numeric, rel=1e-5, abs=1e-9)

    def test_rejects_mismatched_shapes(self):
        with pytest.raises(InputValidationError):
            photometric_loss(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


class TestNormalConsistency:

    def test_aligned_normals_cost_nothing(self, profile_of):
        n = (0.0, 0.0, -1.0)
        profile = profile_of((1.0, 2.0, 0.4), (1.0, 3.0, 0.7), normals=[n, n])
        assert normal_consistency_loss(profile, n) == pytest.approx(0.0, abs=1e-15)

    def test_perpendicular_opaque_gaussian(self, profile_of):
        profile = profile_of((1.0, 2.0, MAX_OPACITY), normals=[(1.0, 0.0, 0.0)])
        assert normal_consistency_loss(profile, (0.0, 0.0, -1.0)) == pytest.approx(MAX_OPACITY, rel=1e-15)

    def test_empty_profile(self, profile_of):
        assert normal_consistency_loss(profile_of(), (0.0, 0.0, 1.0)) == 0.0

    def test_matches_direct_loops(self, make_profile):
        target = np.array([0.0, 0.6, -0.8])
        for _ in range(10):
            profile = make_profile(6)
            expected = direct_normal_consistency(list(profile.g_peak), profile.normals, target)
            assert normal_consistency_loss(profile, target) == pytest.approx(expected, abs=1e-12)

    def test_image_form_agrees_with_profile_form(self, make_profile):
        profile = make_profile(5)
        target = np.array([0.0, 0.0, -1.0])
        weights = compositing_weights(profile.g_peak)
        result = normal_consistency_image(
            np.array([[weights.sum()]]),
            np.array([[weights @ profile.normals]]),
            target.reshape(1, 1, 3),
            np.array([[True]]),
        )
        assert result.pixels == 1
        assert result.value == pytest.approx(normal_consistency_loss(profile, target), abs=1e-12)

    def test_image_form_averages_valid_pixels(self):
        weight_sum = np.array([[1.0, 0.5], [0.2, 0.9]])
        normal_raw = np.zeros((2, 2, 3))
        valid = np.array([[True, False], [True, False]])
        result = normal_consistency_image(weight_sum, normal_raw, np.zeros((2, 2, 3)), valid)
        assert result.value == pytest.approx(0.6, abs=1e-15)
        np.testing.assert_array_equal(result.scale, [[0.5, 0.0], [0.5, 0.0]])


class TestDepthToNormal:

    @pytest.fixture
    def camera(self):
        return Camera.look_at((0.0, 0.0, -4.0), (0.0, 0.0, 0.0), WORLD_UP, 8.0, 8.0, 8, 8)

    def test_fronto_parallel_plane(self, camera):
        depth, mask = plane_depth(camera, (0.0, 0.0, 1.0), 0.0)
        normals, valid = depth_to_normal(depth, mask, camera)
        assert valid[:-1, :-1].all()
        assert not valid[-1].any() and not valid[:, -1].any()
        np.testing.assert_allclose(normals[:-1, :-1], np.broadcast_to((0.0, 0.0, -1.0), (7, 7, 3)), atol=1e-9)

    def test_slanted_plane_faces_the_camera(self, camera):
        n = np.array([0.3, -0.2, -1.0])
        n /= np.linalg.norm(n)
        depth, mask = plane_depth(camera, n, 0.0)
        normals, valid = depth_to_normal(depth, mask, camera)
        assert valid[:-1, :-1].all()
        np.testing.assert_allclose(normals[valid], np.broadcast_to(n, (int(valid.sum()), 3)), atol=1e-9)

    def test_masked_neighbor_invalidates_pixel(self, camera):
        depth, mask = plane_depth(camera, (0.0, 0.0, 1.0), 0.0)
        mask[3, 4] = False
        _, valid = depth_to_normal(depth, mask, camera)
        assert not valid[3, 4]
        assert not valid[3, 3]
        assert not valid[2, 4]
        assert valid[2, 3]

    def test_backward_matches_finite_differences(self, camera, rng):
        depth, mask = plane_depth(camera, (0.0, 0.0, 1.0), 0.0)
        depth = depth * (1.0 + 0.02 * rng.normal(size=depth.shape))
        dnormals = rng.normal(size=depth.shape + (3,))

        def loss(d):
            normals, valid = depth_to_normal(d, mask, camera)
            return float(np.sum(np.where(valid[..., None], normals * dnormals, 0.0)))

        grad = depth_to_normal_backward(depth, mask, camera, dnormals)
        h = 1e-6
        for y, x in [(0, 0), (2, 3), (4, 6), (6, 6), (7, 2)]:
            plus, minus = depth.copy(), depth.copy()
            plus[y, x] += h
            minus[y, x] -= h
            numeric = (loss(plus) - loss(minus)) / (2 * h)
            assert grad[y, x] == pytest.approx(numeric, rel=1e-5, abs=1e-8)


class TestHomography:

    def test_identity_pose(self):
        H = plane_homography(K, K, np.eye(3), np.zeros(3), (0.0, 0.0, 1.0), (0.0, 0.0, 2.0))
        np.testing.assert_allclose(H.matrix, np.eye(3), atol=1e-15)

    def test_pure_rotation(self):
        R = Rotation.from_euler('xyz', [0.05, -0.1, 0.2]).as_matrix()
        H = plane_homography(K, K, R, np.zeros(3), (0.0, 0.0, 1.0), (0.0, 0.0, 2.0))
        np.testing.assert_allclose(H.matrix, K @ R @ np.linalg.inv(K), atol=1e-12)

    def test_matches_direct_transfer(self, rng):
        R = Rotation.from_euler('xyz', [0.1, 0.05, -0.08]).as_matrix()
        T = np.array([0.3, -0.1, 0.05])
        K_n = np.array([[24.0, 0.0, 15.0], [0.0, 22.0, 17.0], [0.0, 0.0, 1.0]])
        n = np.array([0.1, -0.2, 1.0])
        n /= np.linalg.norm(n)
        p = np.array([0.2, 0.1, 3.0])
        H = plane_homography(K, K_n, R, T, n, p)
        for u in rng.uniform(0.0, 32.0, size=(20, 2)):
            ray = np.linalg.inv(K) @ np.array([u[0], u[1], 1.0])
            X = ray * (p @ n) / (ray @ n)
            x_n = K_n @ (R @ X + T)
            np.testing.assert_allclose(H.apply(u), x_n[:2] / x_n[2], atol=1e-6)

    def test_plane_through_camera_is_degenerate(self):
        with pytest.raises(DegeneratePlaneError):
            plane_homography(K, K, np.eye(3), np.zeros(3), (0.0, 0.0, 1.0), (1.0, 1.0, 0.0))

    def test_singular_matrix_is_rejected(self):
        with pytest.raises(InputValidationError):
            Homography(np.zeros((3, 3)))

    def test_compose_with_inverse(self):
        H = Homography([[1.1, 0.02, 3.0], [-0.01, 0.95, -2.0], [1e-3, 2e-3, 1.0]])
        np.testing.assert_allclose(H.compose(H.inverse()).matrix, np.eye(3), atol=1e-12)

    def test_point_at_infinity(self):
        H = Homography([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
        assert np.all(np.isinf(H.apply((1.0, 0.0))))


class TestCycleErrorAndConfidence:

    def test_identity_round_trip(self):
        I = Homography(np.eye(3))
        assert cycle_error((3.5, 7.5), I, I) == 0.0

    def test_inverse_round_trip(self):
        H = Homography([[1.1, 0.02, 3.0], [-0.01, 0.95, -2.0], [1e-3, 2e-3, 1.0]])
        assert cycle_error((10.5, 4.5), H, H.inverse()) == pytest.approx(0.0, abs=1e-9)

    def test_round_trip_through_infinity(self):
        H = Homography([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
        assert cycle_error((1.0, 0.0), H, Homography(np.eye(3))) == float('inf')

    def test_confidence_values(self):
        assert confidence_weight(0.0) == 1.0
        assert confidence_weight(1.0) == 0.0
        assert confidence_weight(0.5) == pytest.approx(np.exp(-0.5), rel=1e-15)
        assert confidence_weight(np.inf) == 0.0
        np.testing.assert_allclose(confidence_weight(np.array([0.0, 0.25, 2.0])), [1.0, np.exp(-0.25), 0.0])


class TestNcc:

    def test_flat_patch_is_undefined(self, rng):
        assert ncc(np.full(49, 0.3), rng.uniform(size=49)) is None

    def test_patch_with_itself(self, rng):
        patch = rng.uniform(size=(7, 7))
        assert ncc(patch, patch) == pytest.approx(1.0, abs=1e-12)

    def test_affine_invariance_and_sign(self, rng):
        patch = rng.uniform(size=(7, 7))
        assert ncc(patch, 2.0 * patch + 3.0) == pytest.approx(1.0, abs=1e-12)
        assert ncc(patch, -patch) == pytest.approx(-1.0, abs=1e-12)


class TestMultiViewLoss:

    def test_identical_views_cost_nothing(self):
        camera, image, depth, mask = plane_view((0.0, 0.0, -4.0))
        normal = np.broadcast_to((0.0, 0.0, -1.0), depth.shape + (3,)).copy()
        result = multiview_loss(camera, camera, image, image, depth, mask, normal, depth, mask)
        assert result.used_pixels > 100
        assert result.value == pytest.approx(0.0, abs=1e-9)

    def test_true_plane_beats_scaled_depth(self):
        cam_r, image_r, depth_r, mask_r = plane_view((-0.2, 0.0, -4.0))
        cam_n, image_n, depth_n, mask_n = plane_view((0.2, 0.0, -4.0))
        normal = np.broadcast_to((0.0, 0.0, -1.0), depth_r.shape + (3,)).copy()
        truth = multiview_loss(cam_r, cam_n, image_r, image_n, depth_r, mask_r, normal, depth_n, mask_n)
        scaled = multiview_loss(cam_r, cam_n, image_r, image_n, 1.05 * depth_r, mask_r, normal, depth_n, mask_n)
        assert truth.used_pixels > 100
        assert truth.value < 1e-3
        assert truth.mean_cycle_error < 0.05
        assert scaled.value > truth.value

    def test_cycle_gradient_matches_finite_differences(self):
        cam_r, image_r, depth_r, mask_r = plane_view((-0.2, 0.0, -4.0))
        cam_n, image_n, depth_n, mask_n = plane_view((0.2, 0.0, -4.0))
        depth_r = 1.02 * depth_r
        normal = np.broadcast_to((0.0, 0.0, -1.0), depth_r.shape + (3,)).copy()
        weights = LossWeights(photometric_consistency=0.0, geometric_consistency=1.0)
        frozen = np.ones(depth_r.shape)

        def run(d):
            return multiview_loss(cam_r, cam_n, image_r, image_n, d, mask_r, normal, depth_n, mask_n,
                                  weights=weights, frozen_weights=frozen)

        base = run(depth_r)
        h = 1e-6
        for y, x in [(10, 12), (16, 16), (20, 9)]:
            plus, minus = depth_r.copy(), depth_r.copy()
            plus[y, x] += h
            minus[y, x] -= h
            hi, lo = run(plus), run(minus)
            assert hi.used_pixels == lo.used_pixels == base.used_pixels
            numeric = (hi.value - lo.value) / (2 * h)
            assert base.grad_depth_r[y, x] == pytest.approx(numeric, rel=1e-4, abs=1e-9)

    def test_empty_mask_uses_nothing(self):
        camera, image, depth, mask = plane_view((0.0, 0.0, -4.0))
        empty = np.zeros_like(mask)
        normal = np.zeros(depth.shape + (3,))
        result = multiview_loss(camera, camera, image, image, depth, empty, normal, depth, mask)
        assert result.used_pixels == 0
        assert result.value == 0.0


class TestLossService:

    @pytest.fixture
    def rendered(self):
        scene = two_gaussian_scene()
        cameras = ring_cameras(2, distance=3.0, width=20, height=16, focal=18.0, arc=np.pi / 6.0)
        results = RenderService(RenderOptions()).render_views(scene, cameras)
        views = [TrainingView(camera, result.color) for camera, result in zip(cameras, results)]
        return views, results

    def test_matching_images_have_zero_photometric_loss(self, rendered):
        views, results = rendered
        breakdown, upstreams = LossService().evaluate(views, results)
        assert breakdown.total == pytest.approx(0.0, abs=1e-12)
        assert breakdown.normal == 0.0 and breakdown.multiview == 0.0
        for upstream in upstreams:
            np.testing.assert_allclose(upstream.color, 0.0, atol=1e-10)
            assert not upstream.depth.any()

    def test_geometric_terms_add_up(self, rendered):
        views, results = rendered
        weights = LossWeights()
        breakdown, upstreams = LossService(weights).evaluate(views, results, geometric=True)
        assert np.isfinite(breakdown.total)
        assert breakdown.total == pytest.approx(
            breakdown.photometric + weights.normal * breakdown.normal + breakdown.multiview, abs=1e-12)
        assert len(upstreams) == 2

    def test_nearest_neighbor_views(self):
        cameras = [
            Camera.look_at(eye, (0.0, 0.0, 0.0), WORLD_UP, 10.0, 10.0, 4, 4)
            for eye in [(0.0, 0.0, -4.0), (0.5, 0.0, -4.0), (3.0, 0.0, -3.0)]
        ]
        assert nearest_neighbor_views(cameras) == [1, 0, 1]
        assert nearest_neighbor_views(cameras[:1]) == [None]
