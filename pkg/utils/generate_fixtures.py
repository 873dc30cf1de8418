"""
Generate the bundled single-Gaussian fixture: scene PLY, cameras and golden depth
"""
import os
import sys
from pathlib import Path
from typing import Dict

import numpy as np
from dotenv import load_dotenv

# Add the project root to the Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.depth import search_precision
from models.config import RenderOptions
from oracle.inversion import numeric_median
from services.render_service import RenderService
from services.scene_io_service import SceneIOService
from utils.errors import OracleError
from utils.logging_config import console_print, get_logger, init_logging
from utils.synthetic_scenes import ring_cameras, single_gaussian_scene

logger = get_logger('utils.generate_fixtures')

FIXTURE_DIR = Path(__file__).resolve().parent.parent / 'fixtures'
FIXTURE_OPACITY = 0.9
FIXTURE_SCALE = 0.3
FIXTURE_CAMERAS = 2


def check_against_oracle(render: RenderService, scene, camera, depth: np.ndarray, mask: np.ndarray,
                         options: RenderOptions) -> float:
    """
    Largest |median_depth - numeric_median| over the valid pixels

    Raises:
        OracleError: a pixel misses the bisection reference by more than the search precision
    """
    tolerance = search_precision(options.bracket_r, options.traversals)
    worst = 0.0
    for y, x in zip(*np.nonzero(mask)):
        reference = numeric_median(render.pixel_profile(scene, camera, int(x), int(y), options))
        if reference is None:
            raise OracleError(f"Pixel ({x}, {y}) is valid but the reference finds no crossing")
        worst = max(worst, abs(float(depth[y, x]) - reference))
    if worst > tolerance:
        raise OracleError(f"Golden depth differs from the bisection reference by {worst:.3e} (> {tolerance:.3e})")
    return worst


def generate_fixtures(out_dir: Path = FIXTURE_DIR) -> Dict[str, Path]:
    """
    Write single_gaussian.ply, cameras.json and golden/depth_XXXX.pfm to `out_dir`.

    The golden depths are rendered from the scene as read back from the PLY so
    that `render` on the written files reproduces them bitwise.
    """
    out_dir = Path(out_dir)
    io = SceneIOService()
    options = RenderOptions()
    render = RenderService(options)

    scene_path = io.save_ply(single_gaussian_scene(FIXTURE_OPACITY, FIXTURE_SCALE), out_dir / 'single_gaussian.ply')
    cameras = ring_cameras(FIXTURE_CAMERAS, distance=3.0, width=16, height=12, focal=20.0, arc=np.pi / 2.0)
    cameras_path = io.save_cameras(cameras, out_dir / 'cameras.json')

    scene = io.load_ply(scene_path).scene
    cameras = io.load_cameras(cameras_path)
    paths = {'scene': scene_path, 'cameras': cameras_path}
    for index, camera in enumerate(cameras):
        result = render.render_view(scene, camera, options)
        worst = check_against_oracle(render, scene, camera, result.median_depth, result.valid_mask, options)
        logger.info(f"View {index}: {int(result.valid_mask.sum())} valid pixel(s), "
                    f"max deviation from bisection {worst:.3e}")
        paths[f'depth_{index:04d}'] = io.write_depth(result.median_depth, result.valid_mask,
                                                     out_dir / 'golden' / f'depth_{index:04d}.pfm')
    return paths


def main():
    load_dotenv()
    init_logging()
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else FIXTURE_DIR
    try:
        paths = generate_fixtures(out_dir)
    except OracleError as e:
        console_print(f"Fixture generation failed: {e}", "ERROR")
        return 2
    for name, path in paths.items():
        console_print(f"{name}: {path}", "SUCCESS")
    return 0


if __name__ == "__main__":
    sys.exit(main())
