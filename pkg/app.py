"""
Command-line entry point for rendering, optimization, evaluation and gradient checks
"""
import argparse
import shutil
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import orjson
from dotenv import load_dotenv

from core.evaluation import cycle_reprojection_map
from models.config import RenderOptions, TrainConfig
from models.render_result import DEPTH_MODES
from services.gradcheck_service import GradcheckService
from services.render_service import RenderService
from services.service_factory import ServiceFactory
from utils.errors import InputValidationError, SolidSplatError
from utils.logging_config import console_print, get_logger, init_logging
from workflows.training_workflow import train

load_dotenv()

init_logging()
logger = get_logger('app')

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERIC = 2


def existing_path(value: str) -> Path:
    path = Path(value)
    if not path.exists():
        raise argparse.ArgumentTypeError(f"{value} does not exist")
    return path


def depth_name(index: int) -> str:
    return f'depth_{index:04d}.pfm'


def camera_pair(cameras: Sequence, pair: Sequence[int]):
    i, j = pair
    for index in (i, j):
        if not 0 <= index < len(cameras):
            raise InputValidationError(f"Camera index {index} out of range (0..{len(cameras) - 1})")
    return cameras[i], cameras[j]


def emit_json(data, output: Optional[Path]):
    if output is not None:
        ServiceFactory.get_scene_io_service().write_json(data, output)
        console_print(f"Report written to {output}", "SUCCESS")
    else:
        print(orjson.dumps(data, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS).decode())


def cmd_render(args) -> int:
    io = ServiceFactory.get_scene_io_service()
    options = RenderOptions.from_env(depth_mode=args.depth_mode, bracket_r=args.bracket_r,
                                     traversals=args.traversals, workers=args.workers)
    scene = io.load_ply(args.scene).scene
    cameras = io.load_cameras(args.cameras)
    render = RenderService(options)

    out_dir = Path(args.outdir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries = []
    for index, camera in enumerate(cameras):
        result = render.render_view(scene, camera)
        depth, mask = result.depth(options.depth_mode)
        png = out_dir / depth_name(index).replace('.pfm', '.png') if args.png else None
        io.write_depth(depth, mask, out_dir / depth_name(index), png_path=png)
        summaries.append({'view': index, 'depth_mode': options.depth_mode, **result.summary()})
        logger.info(f"View {index}: {int(mask.sum())} valid pixel(s)")

    shutil.copyfile(args.cameras, out_dir / 'cameras.json')
    io.write_json(summaries, out_dir / 'render_summary.json')
    console_print(f"Rendered {len(cameras)} view(s) to {out_dir}", "SUCCESS")
    return EXIT_OK


def cmd_optimize(args) -> int:
    io = ServiceFactory.get_scene_io_service()
    config = TrainConfig.from_json(Path(args.config).read_bytes())
    config = config.model_copy(update={'checkpoint_path': str(args.output)})
    init_path = args.init if args.init is not None else Path(args.views_dir) / 'init.ply'
    if not Path(init_path).exists():
        raise InputValidationError(f"Initial scene {init_path} not found (pass --init)")

    scene = io.load_ply(init_path).scene
    views = io.load_views(args.views_dir)
    _, metrics = train(scene, views, config)
    final = metrics[-1]['losses']['total'] if metrics else float('nan')
    console_print(f"Optimization finished: final loss {final:.6f}, checkpoint {args.output}", "SUCCESS")
    return EXIT_OK


def cmd_eval_consistency(args) -> int:
    io = ServiceFactory.get_scene_io_service()
    evaluation = ServiceFactory.get_evaluation_service()
    cameras = io.load_cameras(args.cameras)
    cam_r, cam_n = camera_pair(cameras, args.pair)

    if args.scene is not None:
        render = ServiceFactory.get_render_service()
        scene = io.load_ply(args.scene).scene
        result_r, result_n = render.render_view(scene, cam_r), render.render_view(scene, cam_n)
        modes = DEPTH_MODES if args.all_modes else (args.depth_mode,)
        reports = {mode: evaluation.consistency(result_r, cam_r, result_n, cam_n, mode).to_dict()
                   for mode in modes}
        emit_json(reports if args.all_modes else reports[args.depth_mode], args.output)
        return EXIT_OK

    if args.depth_r is None or args.depth_n is None:
        raise InputValidationError("eval-consistency needs --scene or both --depth-r and --depth-n")
    depth_r, mask_r = io.read_depth(args.depth_r)
    depth_n, mask_n = io.read_depth(args.depth_n)
    report = cycle_reprojection_map(depth_r, mask_r, cam_r, depth_n, mask_n, cam_n)
    emit_json(report.to_dict(), args.output)
    return EXIT_OK


def cmd_eval_chamfer(args) -> int:
    io = ServiceFactory.get_scene_io_service()
    distance = ServiceFactory.get_evaluation_service().chamfer(
        io.load_point_cloud(args.cloud), io.load_point_cloud(args.reference)
    )
    print(f"{distance:.9f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    scene = ServiceFactory.get_scene_io_service().load_ply(args.scene).scene
    report = GradcheckService(workers=args.workers).run(scene, seed=args.seed, rays=args.rays)
    if args.output is not None:
        ServiceFactory.get_scene_io_service().write_json(report.model_dump(mode='json'), args.output)
    print(f"max relative error: {report.max_relative_error:.3e}")
    if not report.rays:
        console_print("No sampled ray reached transmittance 0.5", "ERROR")
        return EXIT_NUMERIC
    if not report.passed:
        console_print(f"Gradient check failed (tolerance {report.tolerance:.0e})", "ERROR")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_fuse(args) -> int:
    io = ServiceFactory.get_scene_io_service()
    depth_dir = Path(args.depth_dir)
    cameras = io.load_cameras(depth_dir / 'cameras.json')
    maps = []
    for index, camera in enumerate(cameras):
        path = depth_dir / depth_name(index)
        if not path.exists():
            raise InputValidationError(f"Missing {path.name} for camera {index}")
        depth, mask = io.read_depth(path)
        if depth.shape != (camera.height, camera.width):
            raise InputValidationError(f"{path.name} is {depth.shape[1]}x{depth.shape[0]}, "
                                       f"camera {index} is {camera.width}x{camera.height}")
        maps.append((depth, mask, camera))
    cloud = ServiceFactory.get_evaluation_service().fuse_depth_maps(maps, args.voxel)
    io.save_point_cloud(cloud, args.output, ascii=args.ascii)
    console_print(f"Fused {len(maps)} depth map(s) into {len(cloud)} point(s)", "SUCCESS")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='solidsplat',
                                     description='Ray-traced median depth rendering of Gaussian scenes')
    commands = parser.add_subparsers(dest='command', required=True)

    render = commands.add_parser('render', help='Render depth maps of a scene')
    render.add_argument('scene', type=existing_path)
    render.add_argument('cameras', type=existing_path)
    render.add_argument('outdir')
    render.add_argument('--depth-mode', choices=DEPTH_MODES, default=None)
    render.add_argument('--bracket-r', type=float, default=None)
    render.add_argument('--traversals', type=int, default=None)
    render.add_argument('--workers', type=int, default=None)
    render.add_argument('--png', action='store_true', help='Also write normalized 16-bit PNGs')
    render.set_defaults(handler=cmd_render)

    optimize = commands.add_parser('optimize', help='Fit a scene to training views')
    optimize.add_argument('views_dir', type=existing_path)
    optimize.add_argument('config', type=existing_path)
    optimize.add_argument('output')
    optimize.add_argument('--init', type=existing_path, default=None,
                          help='Initial scene, defaults to init.ply in the views directory')
    optimize.set_defaults(handler=cmd_optimize)

    consistency = commands.add_parser('eval-consistency', help='Cycle reprojection error of a view pair')
    consistency.add_argument('--cameras', type=existing_path, required=True)
    consistency.add_argument('--pair', type=int, nargs=2, required=True, metavar=('I', 'J'))
    consistency.add_argument('--scene', type=existing_path, default=None)
    consistency.add_argument('--depth-r', type=existing_path, default=None)
    consistency.add_argument('--depth-n', type=existing_path, default=None)
    consistency.add_argument('--depth-mode', choices=DEPTH_MODES, default='stochastic')
    consistency.add_argument('--all-modes', action='store_true', help='Report every depth mode (with --scene)')
    consistency.add_argument('--output', type=Path, default=None)
    consistency.set_defaults(handler=cmd_eval_consistency)

    chamfer = commands.add_parser('eval-chamfer', help='Symmetric Chamfer distance of two clouds')
    chamfer.add_argument('cloud', type=existing_path)
    chamfer.add_argument('reference', type=existing_path)
    chamfer.set_defaults(handler=cmd_eval_chamfer)

    gradcheck = commands.add_parser('gradcheck', help='Finite-difference check of median-depth gradients')
    gradcheck.add_argument('scene', type=existing_path)
    gradcheck.add_argument('--seed', type=int, default=7)
    gradcheck.add_argument('--rays', type=int, default=4)
    gradcheck.add_argument('--workers', type=int, default=1)
    gradcheck.add_argument('--output', type=Path, default=None)
    gradcheck.set_defaults(handler=cmd_gradcheck)

    fuse = commands.add_parser('fuse', help='Fuse the depth maps of a render directory into a cloud')
    fuse.add_argument('depth_dir', type=existing_path)
    fuse.add_argument('output')
    fuse.add_argument('--voxel', type=float, default=0.0)
    fuse.add_argument('--ascii', action='store_true')
    fuse.set_defaults(handler=cmd_fuse)

    return parser


def cli(argv: Optional[List[str]] = None) -> int:
    """
    Run one command

    Returns:
        0 on success, 1 on a usage or validation error, 2 on a numeric failure
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INVALID

    try:
        return args.handler(args)
    except SolidSplatError as e:
        logger.error(f"{args.command} failed: {e}")
        console_print(str(e), "ERROR")
        return e.exit_code
    except FloatingPointError as e:
        logger.error(f"{args.command} failed numerically: {e}")
        console_print(str(e), "ERROR")
        return EXIT_NUMERIC
    except OSError as e:
        logger.error(f"{args.command} failed on I/O: {e}")
        console_print(str(e), "ERROR")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(cli())
