import numpy as np
import pytest

from models.config import LearningRates, RenderOptions, TrainConfig
from models.gaussian import MAX_OPACITY, Scene
from models.gradient_buffer import GradientBuffer
from models.training import TrainingView
from services.optimizer_service import OptimizerService
from services.render_service import RenderService
from services.scene_io_service import SceneIOService
from utils.errors import InputValidationError, TrainingAbortedError
from utils.synthetic_scenes import ring_cameras, sphere_depth, sphere_scene, two_gaussian_scene
from workflows.training_workflow import train

FROZEN = LearningRates(center=0.0, log_scale=0.0, rotation=0.0, logit_opacity=0.0, color=0.0)


def only(**rates):
    values = FROZEN.model_dump()
    values.update(rates)
    return LearningRates(**values)


def finalized(buffer, scene):
    return buffer.finalize(scene.rotations)


def make_config(**overrides):
    values = {'iterations': 3}
    values.update(overrides)
    values.setdefault('geometric_start_iter', values['iterations'])
    return TrainConfig(**values)


@pytest.fixture
def scene():
    return two_gaussian_scene()


@pytest.fixture
def views(scene):
    """Two views of the scene rendered with swapped colors"""
    target = scene.with_parameters(colors=scene.colors[::-1].copy())
    cameras = ring_cameras(2, distance=3.0, width=12, height=10, focal=12.0, arc=np.pi / 6.0)
    results = RenderService(RenderOptions()).render_views(target, cameras)
    return [TrainingView(camera, result.color, name=f'view_{i}') for i, (camera, result) in
            enumerate(zip(cameras, results))]


class TestOptimizerService:

    def test_zero_learning_rates_keep_the_scene(self, scene, rng):
        optimizer = OptimizerService(make_config(learning_rates=FROZEN))
        optimizer.attach(scene)
        buffer = GradientBuffer(len(scene))
        buffer.center[...] = rng.normal(size=buffer.center.shape)
        assert optimizer.step(finalized(buffer, scene)) is scene

    def test_requires_finalized_gradients(self, scene):
        optimizer = OptimizerService(make_config())
        optimizer.attach(scene)
        with pytest.raises(ValueError):
            optimizer.step(GradientBuffer(len(scene)))

    def test_requires_attached_scene(self, scene):
        with pytest.raises(RuntimeError):
            OptimizerService(make_config()).step(finalized(GradientBuffer(len(scene)), scene))

    def test_sgd_moves_against_the_gradient(self, scene):
        optimizer = OptimizerService(make_config(learning_rates=only(center=0.1)))
        optimizer.attach(scene)
        buffer = GradientBuffer(len(scene))
        buffer.center[...] = 1.0
        updated = optimizer.step(finalized(buffer, scene))
        np.testing.assert_allclose(updated.centers, scene.centers - 0.1, atol=1e-15)
        np.testing.assert_array_equal(updated.scales, scene.scales)
        np.testing.assert_array_equal(updated.opacities, scene.opacities)

    def test_sgd_descends_a_quadratic(self, scene):
        target = np.array([[0.3, -0.2, 0.1], [-0.1, 0.4, 0.0]])
        optimizer = OptimizerService(make_config(learning_rates=only(center=0.1)))
        optimizer.attach(scene)
        current = scene
        distances = []
        for _ in range(10):
            buffer = GradientBuffer(len(current))
            buffer.center[...] = current.centers - target
            current = optimizer.step(finalized(buffer, current))
            distances.append(np.linalg.norm(current.centers - target))
        assert np.all(np.diff(distances) < 0.0)
        assert distances[-1] == pytest.approx(0.9 ** 10 * np.linalg.norm(scene.centers - target), rel=1e-9)

    def test_momentum_accumulates(self, scene):
        optimizer = OptimizerService(make_config(learning_rates=only(center=0.1), momentum=0.5))
        optimizer.attach(scene)
        buffer = GradientBuffer(len(scene))
        buffer.center[...] = 1.0
        first = optimizer.step(finalized(buffer, scene))
        second = optimizer.step(buffer)
        np.testing.assert_allclose(first.centers - second.centers, 0.15, atol=1e-12)

    def test_adam_first_step_has_learning_rate_size(self, scene, rng):
        optimizer = OptimizerService(make_config(learning_rates=only(center=0.01), optimizer='adam'))
        optimizer.attach(scene)
        buffer = GradientBuffer(len(scene))
        buffer.center[...] = rng.normal(size=buffer.center.shape)
        updated = optimizer.step(finalized(buffer, scene))
        np.testing.assert_allclose(scene.centers - updated.centers, 0.01 * np.sign(buffer.center), rtol=1e-9)

    def test_projection_keeps_parameters_valid(self, scene, rng):
        rates = LearningRates(center=0.0, log_scale=0.0, rotation=1.0, logit_opacity=100.0, color=10.0)
        optimizer = OptimizerService(make_config(learning_rates=rates))
        optimizer.attach(scene)
        buffer = GradientBuffer(len(scene))
        buffer.opacity[...] = -1e6
        buffer.color[...] = rng.choice([-1e3, 1e3], size=buffer.color.shape)
        buffer.rotation[...] = rng.normal(size=buffer.rotation.shape)
        updated = optimizer.step(finalized(buffer, scene))
        assert np.all(updated.opacities <= MAX_OPACITY)
        assert np.all((updated.colors == 0.0) | (updated.colors == 1.0))
        np.testing.assert_allclose(np.linalg.norm(updated.rotations, axis=1), 1.0, atol=1e-12)

    def test_log_scale_chain_rule(self, scene):
        optimizer = OptimizerService(make_config(learning_rates=only(log_scale=0.01)))
        optimizer.attach(scene)
        buffer = GradientBuffer(len(scene))
        buffer.scales[...] = 1.0
        updated = optimizer.step(finalized(buffer, scene))
        np.testing.assert_allclose(updated.scales, scene.scales * np.exp(-0.01 * scene.scales), rtol=1e-12)


class TestTrainConfig:

    def test_geometric_start_after_last_iteration(self):
        with pytest.raises(ValueError):
            TrainConfig(iterations=10, geometric_start_iter=11)

    def test_even_patch_size(self):
        with pytest.raises(ValueError):
            TrainConfig(ncc_patch_size=6)

    def test_from_json(self):
        config = TrainConfig.from_json(b'{"iterations": 20, "geometric_start_iter": 5, "optimizer": "adam"}')
        assert config.iterations == 20 and config.optimizer == 'adam'
        assert TrainConfig.from_json(b'') == TrainConfig()

    def test_from_json_errors(self):
        with pytest.raises(InputValidationError):
            TrainConfig.from_json(b'{')
        with pytest.raises(InputValidationError):
            TrainConfig.from_json(b'{"iterations": 5}')

    def test_config_hash_is_stable(self):
        assert TrainConfig().config_hash() == TrainConfig().config_hash()
        assert TrainConfig().config_hash() != TrainConfig(seed=1).config_hash()
        assert len(TrainConfig().config_hash()) == 64


class TestTraining:

    def test_metrics_and_checkpoint(self, scene, views, tmp_path):
        checkpoint = tmp_path / 'run' / 'scene.ply'
        config = make_config(iterations=3, geometric_start_iter=2, checkpoint_path=str(checkpoint))
        final, metrics = train(scene, views, config)

        assert [m['iteration'] for m in metrics] == [0, 1, 2]
        assert [m['geometric_active'] for m in metrics] == [False, False, True]
        assert all(np.isfinite(m['losses']['total']) for m in metrics)
        assert len(final) == len(scene)

        scene_file, metadata = SceneIOService().load_checkpoint(checkpoint)
        assert checkpoint.with_suffix('.json').exists()
        assert metadata['iteration'] == 3
        assert metadata['config_hash'] == config.config_hash()
        assert metadata['loss_history'] == [m['losses']['total'] for m in metrics]
        np.testing.assert_allclose(scene_file.scene.centers, final.centers, atol=1e-6)

    def test_color_fit_reduces_the_loss(self, scene, views):
        config = make_config(iterations=5, geometric_start_iter=5, learning_rates=only(color=0.2))
        _, metrics = train(scene, views, config)
        totals = [m['losses']['total'] for m in metrics]
        assert totals[-1] < totals[0]

    def test_frozen_run_returns_the_same_parameters(self, scene, views):
        final, metrics = train(scene, views, make_config(iterations=2, learning_rates=FROZEN))
        np.testing.assert_array_equal(final.centers, scene.centers)
        np.testing.assert_array_equal(final.opacities, scene.opacities)
        assert metrics[0]['losses']['total'] == metrics[1]['losses']['total']

    def test_non_finite_loss_aborts_with_last_good_scene(self, scene, views, tmp_path):
        broken = [TrainingView(v.camera, np.full(v.image.shape, np.nan)) for v in views]
        checkpoint = tmp_path / 'aborted.ply'
        with pytest.raises(TrainingAbortedError) as info:
            train(scene, broken, make_config(checkpoint_path=str(checkpoint)))
        assert info.value.iteration == 0
        np.testing.assert_array_equal(info.value.last_good_scene.centers, scene.centers)
        _, metadata = SceneIOService().load_checkpoint(checkpoint)
        assert metadata['aborted'] is True

    def test_rejects_empty_inputs(self, scene, views):
        with pytest.raises(InputValidationError):
            train(scene, [], make_config())
        with pytest.raises(InputValidationError):
            train(Scene.empty(), views, make_config())


@pytest.mark.slow
def test_sphere_depth_error_shrinks():
    truth_cameras = ring_cameras(4, distance=3.0, width=24, height=24, focal=24.0)
    target = sphere_scene(count=120)
    renders = RenderService(RenderOptions()).render_views(target, truth_cameras)
    views = []
    for camera, result in zip(truth_cameras, renders):
        depth, mask = sphere_depth(camera)
        views.append(TrainingView(camera, result.color, depth=np.where(mask, depth, np.nan)))

    start = sphere_scene(count=120, rng=np.random.default_rng(3), jitter=0.05)
    config = TrainConfig(iterations=40, geometric_start_iter=10,
                         learning_rates=LearningRates(center=2e-3, log_scale=0.0, rotation=0.0,
                                                      logit_opacity=0.0, color=0.0))
    _, metrics = train(start, views, config)
    first = metrics[0]['losses']['depth_error']
    last = metrics[-1]['losses']['depth_error']
    assert last < first
