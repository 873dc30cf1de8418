"""
Error hierarchy shared by the renderer, the optimizer and the CLI
"""
from typing import Any, Optional


class SolidSplatError(Exception):
    """Base class for every error raised by SolidSplat"""

    exit_code = 1


class InputValidationError(SolidSplatError, ValueError):
    """A primitive, camera, ray or configuration value is out of range"""


class DegenerateCovarianceError(InputValidationError):
    """Covariance too badly conditioned to restrict along a ray"""

    def __init__(self, message: str, condition_number: float):
        super().__init__(message)
        self.condition_number = condition_number


class SceneParseError(InputValidationError):
    """Malformed or truncated PLY input"""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class CameraSchemaError(InputValidationError):
    """Camera file does not follow the camera JSON schema"""

    def __init__(self, message: str, field_path: str):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path


class NumericalError(SolidSplatError, ArithmeticError):
    """NaN/Inf or another numeric failure in a computation"""

    exit_code = 2


class DegenerateGradientError(NumericalError):
    """Transmittance is flat at the median crossing"""

    def __init__(self, message: str, slope: float):
        super().__init__(message)
        self.slope = slope


class DegeneratePlaneError(NumericalError):
    """Plane passes through the reference camera center"""


class OracleError(NumericalError):
    """A brute-force reference could not produce an estimate"""


class TrainingAbortedError(NumericalError):
    """Optimization stopped on a non-finite loss"""

    def __init__(self, message: str, iteration: int, last_good_scene: Optional[Any] = None):
        super().__init__(message)
        self.iteration = iteration
        self.last_good_scene = last_good_scene
