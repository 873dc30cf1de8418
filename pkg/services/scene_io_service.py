"""
Scene I/O Service - PLY scenes and clouds, camera JSON, PFM/PNG depth, reports and checkpoints
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import imageio.v3 as iio
import numpy as np
import orjson
from plyfile import PlyData, PlyElement
from pydantic import ValidationError

from models.camera import Camera
from models.config import CameraRecord
from models.gaussian import Scene
from models.scene_file import SceneFile
from models.training import TrainingView
from utils.errors import CameraSchemaError, DegenerateCovarianceError, InputValidationError, SceneParseError
from utils.logging_config import get_logger

logger = get_logger('services.scene_io')

PathLike = Union[str, Path]

END_HEADER = b'end_header'
JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


def _header_length(data: bytes) -> int:
    """Byte offset of the first payload byte"""
    if not data.startswith(b'ply'):
        raise SceneParseError("File does not start with the 'ply' magic", 0)
    marker = data.find(END_HEADER)
    if marker < 0:
        raise SceneParseError("Header has no end_header line", len(data))
    newline = data.find(b'\n', marker)
    return len(data) if newline < 0 else newline + 1


PLY_TYPE_SIZES = {
    'char': 1, 'uchar': 1, 'int8': 1, 'uint8': 1,
    'short': 2, 'ushort': 2, 'int16': 2, 'uint16': 2,
    'int': 4, 'uint': 4, 'int32': 4, 'uint32': 4, 'float': 4, 'float32': 4,
    'double': 8, 'float64': 8,
}


def _vertex_layout(header: bytes) -> Tuple[Optional[int], Optional[int], bool]:
    """(vertex count, bytes per binary vertex row, is binary) read from the raw header"""
    count, size, binary, in_vertex = None, 0, False, False
    for line in header.decode('ascii', errors='replace').splitlines():
        words = line.split()
        if not words:
            continue
        if words[0] == 'format' and len(words) > 1:
            binary = words[1] != 'ascii'
        elif words[0] == 'element':
            in_vertex = len(words) == 3 and words[1] == 'vertex'
            if in_vertex:
                count = int(words[2]) if words[2].isdigit() else None
        elif words[0] == 'property' and in_vertex:
            if len(words) < 3 or words[1] == 'list' or words[1] not in PLY_TYPE_SIZES:
                size = None
            elif size is not None:
                size += PLY_TYPE_SIZES[words[1]]
    return count, (size or None), binary


class SceneIOService:
    """
    Reads and writes every file the renderer consumes or produces.

    Writers are byte-for-byte deterministic; readers reject malformed input
    rather than returning a partial result.
    """

    # PLY scenes

    def load_ply(self, path: PathLike) -> SceneFile:
        """
        Load a Gaussian scene in the standard splatting vertex layout

        Raises:
            SceneParseError: malformed header, truncated payload or missing property
            DegenerateCovarianceError: a primitive has a covariance condition number above 1e12
        """
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise InputValidationError(f"Cannot read scene file {path}: {e}") from e

        header_end = _header_length(data)
        count, row_size, binary = _vertex_layout(data[:header_end])
        if binary and count is not None and row_size is not None and len(data) < header_end + count * row_size:
            raise SceneParseError(f"Payload truncated: header declares {count} vertices", len(data))
        try:
            with path.open('rb') as stream:
                ply = PlyData.read(stream)
        except Exception as e:
            row = getattr(e, 'row', None)
            offset = header_end
            if binary and row is not None and row_size is not None:
                offset = header_end + int(row) * row_size
            raise SceneParseError(f"Cannot parse PLY {path.name}: {e}", offset) from e

        if 'vertex' not in [element.name for element in ply.elements]:
            raise SceneParseError("PLY has no vertex element", header_end)
        vertex = ply['vertex']

        try:
            scene_file = SceneFile.from_vertices(vertex.data)
        except DegenerateCovarianceError:
            raise
        except InputValidationError as e:
            raise SceneParseError(str(e), header_end) from e
        logger.info(f"Loaded {scene_file.count} Gaussian(s) from {path}")
        return scene_file

    def save_ply(self, scene: Union[Scene, SceneFile], path: PathLike) -> Path:
        """Binary little-endian PLY; a SceneFile writes its stored payload unchanged"""
        scene_file = scene if isinstance(scene, SceneFile) else SceneFile.from_scene(scene)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        element = PlyElement.describe(scene_file.vertices, 'vertex')
        PlyData([element], text=False, byte_order='<').write(str(path))
        logger.info(f"Wrote {scene_file.count} Gaussian(s) to {path}")
        return path

    # point clouds

    def save_point_cloud(self, points: np.ndarray, path: PathLike, ascii: bool = False) -> Path:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        vertices = np.zeros(len(points), dtype=[('x', '<f4'), ('y', '<f4'), ('z', '<f4')])
        vertices['x'], vertices['y'], vertices['z'] = points[:, 0], points[:, 1], points[:, 2]
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        PlyData([PlyElement.describe(vertices, 'vertex')], text=ascii, byte_order='<').write(str(path))
        logger.info(f"Wrote {len(points)} point(s) to {path}")
        return path

    def load_point_cloud(self, path: PathLike) -> np.ndarray:
        path = Path(path)
        try:
            ply = PlyData.read(str(path))
            vertex = ply['vertex']
            return np.stack([np.asarray(vertex[axis], dtype=np.float64) for axis in 'xyz'], axis=-1)
        except (OSError, KeyError, ValueError) as e:
            raise InputValidationError(f"Cannot read point cloud {path}: {e}") from e

    # cameras

    def load_camera_records(self, path: PathLike) -> List[CameraRecord]:
        path = Path(path)
        try:
            payload = orjson.loads(path.read_bytes())
        except OSError as e:
            raise InputValidationError(f"Cannot read camera file {path}: {e}") from e
        except orjson.JSONDecodeError as e:
            raise CameraSchemaError(f"not valid JSON ({e})", '$') from e
        if not isinstance(payload, list):
            raise CameraSchemaError("expected an array of cameras", '$')

        records = []
        for index, entry in enumerate(payload):
            try:
                records.append(CameraRecord.model_validate(entry))
            except ValidationError as e:
                error = e.errors()[0]
                location = ''.join(f'[{part}]' if isinstance(part, int) else f'.{part}' for part in error['loc'])
                raise CameraSchemaError(error['msg'], f'$[{index}]{location}') from e
        return records

    def load_cameras(self, path: PathLike) -> List[Camera]:
        """
        Validated cameras from a camera JSON file

        Raises:
            CameraSchemaError: a record violates the schema, with its field path
        """
        cameras = []
        for index, record in enumerate(self.load_camera_records(path)):
            try:
                cameras.append(Camera.from_parameters(
                    record.fx, record.fy, record.cx, record.cy,
                    record.rotation, record.translation, record.width, record.height,
                ))
            except InputValidationError as e:
                raise CameraSchemaError(str(e), f'$[{index}].rotation') from e
        logger.info(f"Loaded {len(cameras)} camera(s) from {path}")
        return cameras

    def save_cameras(self, cameras: Sequence[Camera], path: PathLike,
                     images: Optional[Sequence[str]] = None, depths: Optional[Sequence[str]] = None) -> Path:
        entries = []
        for index, camera in enumerate(cameras):
            entry = camera.to_dict()
            if images is not None:
                entry['image'] = images[index]
            if depths is not None:
                entry['depth'] = depths[index]
            entries.append(entry)
        return self.write_json(entries, path)

    # depth maps

    def encode_pfm(self, depth: np.ndarray, mask: np.ndarray) -> bytes:
        """Single-channel little-endian PFM, rows bottom to top, masked pixels +inf"""
        depth = np.asarray(depth, dtype=np.float64)
        height, width = depth.shape
        values = np.where(mask, depth, np.inf).astype('<f4')
        header = f"Pf\n{width} {height}\n-1.0\n".encode('ascii')
        return header + values[::-1].tobytes()

    def decode_pfm(self, data: bytes) -> Tuple[np.ndarray, np.ndarray]:
        lines = data.split(b'\n', 3)
        if len(lines) < 4 or lines[0] != b'Pf':
            raise InputValidationError("Not a single-channel PFM file")
        try:
            width, height = (int(v) for v in lines[1].split())
            scale = float(lines[2])
        except ValueError as e:
            raise InputValidationError(f"Malformed PFM header: {e}") from e
        dtype = '<f4' if scale < 0 else '>f4'
        payload = lines[3]
        if len(payload) != width * height * 4:
            raise InputValidationError(f"PFM payload holds {len(payload)} bytes, expected {width * height * 4}")
        values = np.frombuffer(payload, dtype=dtype).reshape(height, width)[::-1].astype(np.float64)
        return values, np.isfinite(values)

    def write_depth(self, depth: np.ndarray, mask: np.ndarray, path: PathLike,
                    png_path: Optional[PathLike] = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.encode_pfm(depth, mask))
        if png_path is not None:
            self.write_depth_png(depth, mask, png_path)
        return path

    def read_depth(self, path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
        try:
            return self.decode_pfm(Path(path).read_bytes())
        except OSError as e:
            raise InputValidationError(f"Cannot read depth file {path}: {e}") from e

    def depth_png_values(self, depth: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Linear min-max normalization of valid depths to uint16, masked pixels 0"""
        out = np.zeros(depth.shape, dtype=np.uint16)
        if not mask.any():
            return out
        valid = depth[mask]
        low, high = float(valid.min()), float(valid.max())
        span = high - low
        normalized = (valid - low) / span if span > 0 else np.ones_like(valid)
        out[mask] = np.round(normalized * 65535.0).astype(np.uint16)
        return out

    def write_depth_png(self, depth: np.ndarray, mask: np.ndarray, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        iio.imwrite(path, self.depth_png_values(np.asarray(depth, dtype=np.float64), mask))
        return path

    # images and views

    def load_image(self, path: PathLike) -> np.ndarray:
        """RGB image as float64 in [0, 1]"""
        try:
            image = iio.imread(Path(path))
        except (OSError, ValueError) as e:
            raise InputValidationError(f"Cannot read image {path}: {e}") from e
        if np.issubdtype(image.dtype, np.integer):
            image = image.astype(np.float64) / float(np.iinfo(image.dtype).max)
        else:
            image = image.astype(np.float64)
        if image.ndim == 3:
            image = image[..., :3]
        return image

    def write_image(self, image: np.ndarray, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        iio.imwrite(path, np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8))
        return path

    def load_views(self, views_dir: PathLike) -> List[TrainingView]:
        """Training views described by `cameras.json` inside a directory"""
        views_dir = Path(views_dir)
        records = self.load_camera_records(views_dir / 'cameras.json')
        cameras = self.load_cameras(views_dir / 'cameras.json')
        views = []
        for index, (record, camera) in enumerate(zip(records, cameras)):
            if record.image is None:
                raise CameraSchemaError("training views need an image", f'$[{index}].image')
            image = self.load_image(views_dir / record.image)
            depth = self.read_depth(views_dir / record.depth)[0] if record.depth else None
            views.append(TrainingView(camera, image, depth, name=record.image))
        logger.info(f"Loaded {len(views)} training view(s) from {views_dir}")
        return views

    # reports and checkpoints

    def write_json(self, data: Any, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(orjson.dumps(data, option=JSON_OPTIONS))
        return path

    def read_json(self, path: PathLike) -> Any:
        try:
            return orjson.loads(Path(path).read_bytes())
        except (OSError, orjson.JSONDecodeError) as e:
            raise InputValidationError(f"Cannot read JSON {path}: {e}") from e

    def save_checkpoint(self, scene: Scene, path: PathLike, metadata: Dict[str, Any]) -> Tuple[Path, Path]:
        """Scene PLY plus a JSON sidecar next to it with the same stem"""
        path = Path(path)
        ply_path = self.save_ply(scene, path)
        sidecar = self.write_json(metadata, path.with_suffix('.json'))
        logger.info(f"Checkpoint at iteration {metadata.get('iteration')} written to {ply_path}")
        return ply_path, sidecar

    def load_checkpoint(self, path: PathLike) -> Tuple[SceneFile, Dict[str, Any]]:
        path = Path(path)
        return self.load_ply(path), self.read_json(path.with_suffix('.json'))
