import numpy as np
import orjson
import pytest
from plyfile import PlyData, PlyElement

from app import build_parser, cli
from models.config import RenderOptions
from services.render_service import RenderService
from services.scene_io_service import SceneIOService
from utils.generate_fixtures import generate_fixtures
from utils.synthetic_scenes import ring_cameras, two_gaussian_scene


@pytest.fixture(autouse=True)
def default_render_env(monkeypatch):
    for name in ('SOLIDSPLAT_WORKERS', 'SOLIDSPLAT_BRACKET_R', 'SOLIDSPLAT_TRAVERSALS', 'SOLIDSPLAT_NEAR'):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def fixtures(tmp_path):
    return generate_fixtures(tmp_path / 'fixtures')


@pytest.fixture
def rendered(fixtures, tmp_path):
    out_dir = tmp_path / 'render'
    assert cli(['render', str(fixtures['scene']), str(fixtures['cameras']), str(out_dir)]) == 0
    return out_dir


def test_parser_knows_every_command():
    parser = build_parser()
    commands = next(action for action in parser._actions if action.dest == 'command')
    assert set(commands.choices) == {'render', 'optimize', 'eval-consistency', 'eval-chamfer', 'gradcheck', 'fuse'}
    args = parser.parse_args(['fuse', '.', 'cloud.ply', '--voxel', '0.1'])
    assert args.voxel == 0.1 and args.command == 'fuse'


class TestRender:

    def test_reproduces_golden_depth_bitwise(self, fixtures, rendered):
        for key in ('depth_0000', 'depth_0001'):
            assert (rendered / f'{key}.pfm').read_bytes() == fixtures[key].read_bytes()
        assert (rendered / 'cameras.json').exists()
        summary = orjson.loads((rendered / 'render_summary.json').read_bytes())
        assert [entry['view'] for entry in summary] == [0, 1]
        assert all(entry['valid_pixels'] > 0 for entry in summary)

    def test_png_companions(self, fixtures, tmp_path):
        out_dir = tmp_path / 'png'
        assert cli(['render', str(fixtures['scene']), str(fixtures['cameras']), str(out_dir), '--png']) == 0
        assert (out_dir / 'depth_0000.png').exists()

    def test_missing_scene(self, fixtures, tmp_path):
        assert cli(['render', str(tmp_path / 'absent.ply'), str(fixtures['cameras']), str(tmp_path)]) == 1

    @pytest.mark.parametrize('flags', [['--workers', '0'], ['--bracket-r', '-1'], ['--traversals', '0']])
    def test_out_of_range_options(self, fixtures, tmp_path, flags):
        argv = ['render', str(fixtures['scene']), str(fixtures['cameras']), str(tmp_path / 'out'), *flags]
        assert cli(argv) == 1

    def test_malformed_environment_default(self, fixtures, tmp_path, monkeypatch):
        monkeypatch.setenv('SOLIDSPLAT_WORKERS', 'many')
        assert cli(['render', str(fixtures['scene']), str(fixtures['cameras']), str(tmp_path / 'out')]) == 1

    def test_ill_conditioned_scene(self, fixtures, tmp_path):
        scene_file = SceneIOService().load_ply(fixtures['scene'])
        vertices = scene_file.vertices.copy()
        vertices['scale_2'] = np.log(1e-8)
        needle = tmp_path / 'needle.ply'
        PlyData([PlyElement.describe(vertices, 'vertex')], text=False, byte_order='<').write(str(needle))
        assert cli(['render', str(needle), str(fixtures['cameras']), str(tmp_path / 'out')]) == 1
        assert cli(['gradcheck', str(needle)]) == 1

    def test_invalid_camera_file(self, fixtures, tmp_path):
        cameras = orjson.loads(fixtures['cameras'].read_bytes())
        cameras[0]['fx'] = -1.0
        broken = tmp_path / 'broken.json'
        broken.write_bytes(orjson.dumps(cameras))
        assert cli(['render', str(fixtures['scene']), str(broken), str(tmp_path / 'out')]) == 1


class TestEvaluationCommands:

    def test_fuse(self, rendered, tmp_path):
        output = tmp_path / 'cloud.ply'
        assert cli(['fuse', str(rendered), str(output)]) == 0
        io = SceneIOService()
        valid = sum(int(io.read_depth(rendered / f'depth_{i:04d}.pfm')[1].sum()) for i in range(2))
        assert len(io.load_point_cloud(output)) == valid

    def test_eval_chamfer(self, tmp_path, capsys):
        io = SceneIOService()
        cloud = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        io.save_point_cloud(cloud, tmp_path / 'a.ply')
        io.save_point_cloud(cloud + [0.0, 0.1, 0.0], tmp_path / 'b.ply')
        assert cli(['eval-chamfer', str(tmp_path / 'a.ply'), str(tmp_path / 'b.ply')]) == 0
        assert float(capsys.readouterr().out.strip().splitlines()[-1]) == pytest.approx(0.1, rel=1e-6)

    def test_eval_consistency_from_depth_files(self, fixtures, tmp_path):
        output = tmp_path / 'report.json'
        code = cli(['eval-consistency', '--cameras', str(fixtures['cameras']), '--pair', '0', '1',
                    '--depth-r', str(fixtures['depth_0000']), '--depth-n', str(fixtures['depth_0001']),
                    '--output', str(output)])
        assert code == 0
        report = orjson.loads(output.read_bytes())
        assert report['height'] == 12 and report['width'] == 16
        assert 0.0 <= report['valid_fraction'] <= 1.0

    def test_eval_consistency_all_modes(self, fixtures, tmp_path):
        output = tmp_path / 'modes.json'
        code = cli(['eval-consistency', '--cameras', str(fixtures['cameras']), '--pair', '0', '1',
                    '--scene', str(fixtures['scene']), '--all-modes', '--output', str(output)])
        assert code == 0
        assert set(orjson.loads(output.read_bytes())) == {'stochastic', 'step', 'expected'}

    def test_camera_index_out_of_range(self, fixtures):
        code = cli(['eval-consistency', '--cameras', str(fixtures['cameras']), '--pair', '0', '5',
                    '--depth-r', str(fixtures['depth_0000']), '--depth-n', str(fixtures['depth_0001'])])
        assert code == 1

    def test_consistency_needs_depths_or_scene(self, fixtures):
        assert cli(['eval-consistency', '--cameras', str(fixtures['cameras']), '--pair', '0', '1']) == 1


class TestGradcheckCommand:

    def test_single_gaussian_passes(self, fixtures, tmp_path):
        output = tmp_path / 'gradcheck.json'
        assert cli(['gradcheck', str(fixtures['scene']), '--rays', '2', '--output', str(output)]) == 0
        report = orjson.loads(output.read_bytes())
        assert report['seed'] == 7
        assert report['rays']


class TestOptimizeCommand:

    def test_writes_checkpoint(self, tmp_path):
        io = SceneIOService()
        views_dir = tmp_path / 'views'
        scene = two_gaussian_scene()
        cameras = ring_cameras(2, distance=3.0, width=8, height=6, focal=8.0, arc=np.pi / 6.0)
        results = RenderService(RenderOptions()).render_views(scene, cameras)
        names = []
        for index, result in enumerate(results):
            names.append(f'view_{index}.png')
            io.write_image(result.color, views_dir / names[-1])
        io.save_cameras(cameras, views_dir / 'cameras.json', images=names)
        io.save_ply(scene, views_dir / 'init.ply')
        config = tmp_path / 'config.json'
        config.write_bytes(orjson.dumps({'iterations': 1, 'geometric_start_iter': 1}))

        output = tmp_path / 'out' / 'scene.ply'
        assert cli(['optimize', str(views_dir), str(config), str(output)]) == 0
        _, metadata = io.load_checkpoint(output)
        assert metadata['iteration'] == 1

    def test_invalid_config(self, tmp_path):
        views_dir = tmp_path / 'views'
        views_dir.mkdir()
        config = tmp_path / 'config.json'
        config.write_bytes(b'{"ncc_patch_size": 4}')
        assert cli(['optimize', str(views_dir), str(config), str(tmp_path / 'out.ply')]) == 1
