import numpy as np
import orjson
import pytest
from plyfile import PlyData, PlyElement

from models.gaussian import MAX_OPACITY
from models.scene_file import REQUIRED_PROPERTIES, SH_C0, SceneFile
from services.scene_io_service import SceneIOService
from utils.errors import CameraSchemaError, DegenerateCovarianceError, InputValidationError, SceneParseError
from utils.synthetic_scenes import random_scene, ring_cameras


@pytest.fixture
def io():
    return SceneIOService()


def write_vertices(path, **columns):
    count = len(next(iter(columns.values())))
    vertices = np.zeros(count, dtype=[(name, '<f4') for name in columns])
    for name, values in columns.items():
        vertices[name] = values
    PlyData([PlyElement.describe(vertices, 'vertex')], text=False, byte_order='<').write(str(path))
    return path


def neutral_columns(count=1):
    columns = {name: np.zeros(count) for name in REQUIRED_PROPERTIES}
    columns['rot_0'] = np.full(count, 2.0)
    return columns


def camera_entry(**changes):
    entry = {
        'width': 4, 'height': 3, 'fx': 10.0, 'fy': 10.0, 'cx': 2.0, 'cy': 1.5,
        'rotation': [1, 0, 0, 0, 1, 0, 0, 0, 1], 'translation': [0, 0, 4],
    }
    entry.update(changes)
    return entry


class TestPfm:

    def test_exact_bytes(self, io):
        data = io.encode_pfm(np.array([[1.5, 7.0]]), np.array([[True, False]]))
        assert data == b'Pf\n2 1\n-1.0\n' + np.array([1.5, np.inf], dtype='<f4').tobytes()

    def test_rows_are_written_bottom_to_top(self, io):
        data = io.encode_pfm(np.array([[1.0], [2.0]]), np.ones((2, 1), dtype=bool))
        assert data.endswith(np.array([2.0, 1.0], dtype='<f4').tobytes())

    def test_decode_restores_values_and_mask(self, io, rng):
        depth = rng.uniform(1.0, 5.0, size=(4, 6))
        mask = rng.uniform(size=(4, 6)) > 0.3
        values, valid = io.decode_pfm(io.encode_pfm(depth, mask))
        np.testing.assert_array_equal(valid, mask)
        np.testing.assert_array_equal(values[mask], depth[mask].astype(np.float32))

    def test_rejects_malformed_files(self, io):
        with pytest.raises(InputValidationError):
            io.decode_pfm(b'PF\n1 1\n-1.0\n' + bytes(12))
        with pytest.raises(InputValidationError):
            io.decode_pfm(b'Pf\n2 2\n-1.0\n' + bytes(12))

    def test_depth_png_normalization(self, io):
        depth = np.array([[1.0, 2.0], [3.0, 9.0]])
        mask = np.array([[True, True], [True, False]])
        np.testing.assert_array_equal(io.depth_png_values(depth, mask), [[0, 32768], [65535, 0]])


class TestPly:

    def test_activations(self, io, tmp_path):
        path = write_vertices(tmp_path / 'neutral.ply', **neutral_columns())
        scene_file = io.load_ply(path)
        scene = scene_file.scene
        np.testing.assert_allclose(scene.colors, [[0.5, 0.5, 0.5]])
        np.testing.assert_allclose(scene.opacities, [0.5])
        np.testing.assert_allclose(scene.scales, [[1.0, 1.0, 1.0]])
        np.testing.assert_allclose(scene.rotations, [[1.0, 0.0, 0.0, 0.0]])

    def test_colors_and_opacity_are_clamped(self, io, tmp_path):
        columns = neutral_columns()
        columns['f_dc_0'] = np.array([10.0])
        columns['opacity'] = np.array([40.0])
        scene = io.load_ply(write_vertices(tmp_path / 'bright.ply', **columns)).scene
        assert scene.colors[0, 0] == 1.0
        assert scene.opacities[0] == MAX_OPACITY

    def test_sh_dc_constant(self, io, tmp_path):
        columns = neutral_columns()
        columns['f_dc_1'] = np.array([1.0])
        scene = io.load_ply(write_vertices(tmp_path / 'dc.ply', **columns)).scene
        assert scene.colors[0, 1] == pytest.approx(0.5 + SH_C0, rel=1e-7)

    def test_truncated_payload(self, io, tmp_path):
        path = write_vertices(tmp_path / 'full.ply', **neutral_columns(5))
        data = path.read_bytes()
        truncated = tmp_path / 'truncated.ply'
        truncated.write_bytes(data[:-10])
        with pytest.raises(SceneParseError) as info:
            io.load_ply(truncated)
        assert info.value.byte_offset > 0

    def test_not_a_ply_file(self, io, tmp_path):
        path = tmp_path / 'scene.ply'
        path.write_bytes(b'solid mesh\n')
        with pytest.raises(SceneParseError) as info:
            io.load_ply(path)
        assert info.value.byte_offset == 0

    def test_missing_property(self, io, tmp_path):
        columns = neutral_columns()
        del columns['opacity']
        with pytest.raises(SceneParseError):
            io.load_ply(write_vertices(tmp_path / 'partial.ply', **columns))

    def test_zero_quaternion(self, io, tmp_path):
        columns = neutral_columns()
        columns['rot_0'] = np.zeros(1)
        with pytest.raises(SceneParseError):
            io.load_ply(write_vertices(tmp_path / 'zero.ply', **columns))

    def test_ill_conditioned_covariance(self, io, tmp_path):
        columns = neutral_columns(2)
        columns['scale_2'] = np.array([0.0, np.log(1e-7)])
        with pytest.raises(DegenerateCovarianceError) as info:
            io.load_ply(write_vertices(tmp_path / 'needle.ply', **columns))
        assert 'Gaussian 1' in str(info.value)

    def test_missing_file(self, io, tmp_path):
        with pytest.raises(InputValidationError):
            io.load_ply(tmp_path / 'absent.ply')

    def test_save_then_load(self, io, tmp_path, rng):
        scene = random_scene(rng, 6)
        loaded = io.load_ply(io.save_ply(scene, tmp_path / 'scene.ply')).scene
        np.testing.assert_allclose(loaded.centers, scene.centers, atol=1e-6)
        np.testing.assert_allclose(loaded.scales, scene.scales, rtol=1e-5)
        np.testing.assert_allclose(loaded.opacities, scene.opacities, rtol=1e-5)
        np.testing.assert_allclose(loaded.colors, scene.colors, atol=1e-5)

    def test_unmodified_file_is_rewritten_bitwise(self, io, tmp_path, rng):
        first = io.save_ply(random_scene(rng, 4), tmp_path / 'first.ply')
        second = io.save_ply(io.load_ply(first), tmp_path / 'second.ply')
        assert first.read_bytes() == second.read_bytes()

    def test_scene_file_properties(self, rng):
        scene_file = SceneFile.from_scene(random_scene(rng, 3))
        assert scene_file.count == 3
        assert set(REQUIRED_PROPERTIES) <= set(scene_file.property_names)


class TestCameras:

    def write(self, tmp_path, payload):
        path = tmp_path / 'cameras.json'
        path.write_bytes(orjson.dumps(payload))
        return path

    def test_load(self, io, tmp_path):
        cameras = io.load_cameras(self.write(tmp_path, [camera_entry()]))
        assert len(cameras) == 1
        np.testing.assert_allclose(cameras[0].center, (0.0, 0.0, -4.0))

    def test_non_positive_focal_length(self, io, tmp_path):
        with pytest.raises(CameraSchemaError) as info:
            io.load_cameras(self.write(tmp_path, [camera_entry(fx=0.0)]))
        assert info.value.field_path == '$[0].fx'

    def test_unknown_field(self, io, tmp_path):
        with pytest.raises(CameraSchemaError) as info:
            io.load_cameras(self.write(tmp_path, [camera_entry(), camera_entry(skew=0.1)]))
        assert info.value.field_path == '$[1].skew'

    def test_short_rotation(self, io, tmp_path):
        with pytest.raises(CameraSchemaError) as info:
            io.load_cameras(self.write(tmp_path, [camera_entry(rotation=[1, 0, 0])]))
        assert info.value.field_path == '$[0].rotation'

    def test_non_orthonormal_rotation(self, io, tmp_path):
        with pytest.raises(CameraSchemaError) as info:
            io.load_cameras(self.write(tmp_path, [camera_entry(rotation=[2, 0, 0, 0, 1, 0, 0, 0, 1])]))
        assert info.value.field_path == '$[0].rotation'

    def test_top_level_must_be_an_array(self, io, tmp_path):
        with pytest.raises(CameraSchemaError) as info:
            io.load_cameras(self.write(tmp_path, camera_entry()))
        assert info.value.field_path == '$'

    def test_save_then_load(self, io, tmp_path):
        cameras = ring_cameras(3, width=8, height=6, focal=9.0)
        loaded = io.load_cameras(io.save_cameras(cameras, tmp_path / 'rig.json'))
        for original, restored in zip(cameras, loaded):
            np.testing.assert_allclose(restored.intrinsics, original.intrinsics)
            np.testing.assert_allclose(restored.center, original.center, atol=1e-12)


class TestViewsAndCheckpoints:

    def test_load_views(self, io, tmp_path):
        image = np.linspace(0.0, 1.0, 4 * 3 * 3).reshape(3, 4, 3)
        io.write_image(image, tmp_path / 'view.png')
        io.write_depth(np.full((3, 4), 4.0), np.ones((3, 4), dtype=bool), tmp_path / 'view.pfm')
        (tmp_path / 'cameras.json').write_bytes(orjson.dumps([camera_entry(image='view.png', depth='view.pfm')]))
        views = io.load_views(tmp_path)
        assert len(views) == 1
        np.testing.assert_allclose(views[0].image, image, atol=1.0 / 255.0)
        np.testing.assert_array_equal(views[0].depth, np.full((3, 4), 4.0))

    def test_views_need_images(self, io, tmp_path):
        (tmp_path / 'cameras.json').write_bytes(orjson.dumps([camera_entry()]))
        with pytest.raises(CameraSchemaError) as info:
            io.load_views(tmp_path)
        assert info.value.field_path == '$[0].image'

    def test_checkpoint_round_trip(self, io, tmp_path, rng):
        scene = random_scene(rng, 3)
        metadata = {'iteration': 7, 'loss_history': [0.5, 0.25], 'config_hash': 'abc'}
        ply_path, sidecar = io.save_checkpoint(scene, tmp_path / 'ckpt' / 'scene.ply', metadata)
        assert sidecar == ply_path.with_suffix('.json')
        scene_file, restored = io.load_checkpoint(ply_path)
        assert restored == metadata
        assert scene_file.count == 3

    def test_unreadable_json(self, io, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_bytes(b'{')
        with pytest.raises(InputValidationError):
            io.read_json(path)
