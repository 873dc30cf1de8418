"""
Structured configuration models
"""
import os
import hashlib
from typing import List, Literal, Optional

import orjson
from pydantic import BaseModel, ConfigDict, Field, model_validator

from utils.errors import InputValidationError

DepthMode = Literal['stochastic', 'step', 'expected']


class LossWeights(BaseModel):
    """Weights of the combined training loss"""
    model_config = ConfigDict(frozen=True)

    ssim_lambda: float = Field(default=0.2, ge=0, le=1, description="D-SSIM share of the photometric loss")
    normal: float = Field(default=0.05, ge=0, description="Normal consistency weight w_n")
    photometric_consistency: float = Field(default=0.6, ge=0, description="Multi-view NCC weight w_pc")
    geometric_consistency: float = Field(default=0.02, ge=0, description="Multi-view cycle error weight w_gc")


class RenderOptions(BaseModel):
    """Per-render numerical options"""
    model_config = ConfigDict(frozen=True)

    bracket_r: float = Field(default=0.4, gt=0, description="Half width of the median search bracket")
    traversals: int = Field(default=5, ge=1, description="Eight-way bracket refinements")
    workers: int = Field(default=1, ge=1, description="Row worker threads")
    near: float = Field(default=0.01, gt=0, description="Restrictions peaking before this are dropped")
    alpha_cutoff: float = Field(default=1e-4, gt=0, lt=1, description="Minimum g_peak gathered along a ray")
    prefilter_sigmas: float = Field(default=3.0, gt=0, description="Bounding sphere radius in largest scales")
    depth_mode: DepthMode = 'stochastic'

    @classmethod
    def from_env(cls, **overrides) -> 'RenderOptions':
        """
        Defaults from the SOLIDSPLAT_* environment variables, then explicit overrides

        Raises:
            InputValidationError: an environment value or override is malformed or out of range
        """
        values = {
            'workers': os.getenv('SOLIDSPLAT_WORKERS', 1),
            'bracket_r': os.getenv('SOLIDSPLAT_BRACKET_R', 0.4),
            'traversals': os.getenv('SOLIDSPLAT_TRAVERSALS', 5),
            'near': os.getenv('SOLIDSPLAT_NEAR', 0.01),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls.model_validate(values)
        except ValueError as e:
            raise InputValidationError(f"Invalid render options: {e}") from e


class LearningRates(BaseModel):
    """Per-group learning rates; zero freezes a group"""
    model_config = ConfigDict(frozen=True)

    center: float = Field(default=1e-3, ge=0)
    log_scale: float = Field(default=5e-3, ge=0)
    rotation: float = Field(default=1e-3, ge=0)
    logit_opacity: float = Field(default=5e-2, ge=0)
    color: float = Field(default=2.5e-2, ge=0)

    def is_zero(self) -> bool:
        return all(value == 0.0 for value in self.model_dump().values())


class TrainConfig(BaseModel):
    """Settings of one optimization run"""
    model_config = ConfigDict(frozen=True)

    iterations: int = Field(default=300, ge=1)
    learning_rates: LearningRates = Field(default_factory=LearningRates)
    optimizer: Literal['sgd', 'adam'] = 'sgd'
    momentum: float = Field(default=0.0, ge=0, lt=1)
    adam_betas: List[float] = Field(default=[0.9, 0.999], min_length=2, max_length=2)
    adam_eps: float = Field(default=1e-15, gt=0)
    geometric_start_iter: int = Field(default=100, ge=0, description="First iteration with normal and multi-view terms")
    views_per_iteration: int = Field(default=0, ge=0, description="Views sampled per iteration, 0 renders all")
    ncc_patch_size: int = Field(default=7, ge=3)
    weights: LossWeights = Field(default_factory=LossWeights)
    seed: int = 0
    render: RenderOptions = Field(default_factory=RenderOptions)
    checkpoint_path: Optional[str] = None
    checkpoint_every: int = Field(default=0, ge=0, description="Checkpoint interval in iterations, 0 writes only at the end")

    @model_validator(mode='after')
    def _check_schedule(self) -> 'TrainConfig':
        if self.geometric_start_iter > self.iterations:
            raise ValueError(
                f"geometric_start_iter ({self.geometric_start_iter}) exceeds iterations ({self.iterations})"
            )
        if self.ncc_patch_size % 2 == 0:
            raise ValueError(f"ncc_patch_size must be odd, got {self.ncc_patch_size}")
        return self

    def canonical_json(self) -> bytes:
        return orjson.dumps(self.model_dump(mode='json'), option=orjson.OPT_SORT_KEYS)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form"""
        return hashlib.sha256(self.canonical_json()).hexdigest()

    @classmethod
    def from_json(cls, payload: bytes) -> 'TrainConfig':
        try:
            data = orjson.loads(payload) if payload.strip() else {}
        except orjson.JSONDecodeError as e:
            raise InputValidationError(f"Config file is not valid JSON: {e}") from e
        try:
            return cls.model_validate(data)
        except ValueError as e:
            raise InputValidationError(f"Invalid training config: {e}") from e


class QuadratureSpec(BaseModel):
    """Bounds and budget of an adaptive quadrature"""
    model_config = ConfigDict(frozen=True)

    lower: float
    upper: float
    tolerance: float = Field(default=1e-10, gt=0)
    max_subdivisions: int = Field(default=200000, ge=1)

    @model_validator(mode='after')
    def _check_bounds(self) -> 'QuadratureSpec':
        if not self.upper > self.lower:
            raise ValueError(f"Quadrature bounds must satisfy lower < upper, got [{self.lower}, {self.upper}]")
        return self


class CameraRecord(BaseModel):
    """One entry of a camera JSON file"""
    model_config = ConfigDict(extra='forbid')

    width: int = Field(gt=0)
    height: int = Field(gt=0)
    fx: float = Field(gt=0)
    fy: float = Field(gt=0)
    cx: float
    cy: float
    rotation: List[float] = Field(min_length=9, max_length=9, description="Row-major world-to-camera rotation")
    translation: List[float] = Field(min_length=3, max_length=3)
    image: Optional[str] = None
    depth: Optional[str] = None
