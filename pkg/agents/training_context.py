"""
Training Context Manager - Handles run-specific context data
"""
from typing import List, Optional
from contextvars import ContextVar

import numpy as np

from models.config import TrainConfig
from models.training import TrainingView
from services.loss_service import LossService
from services.optimizer_service import OptimizerService

_current_run: ContextVar[Optional['TrainingRun']] = ContextVar('current_run', default=None)


class TrainingRun:
    """
    Everything an agent needs beyond the graph state: the views, the config,
    the per-run services and the seeded view sampler
    """

    def __init__(self, run_id: str, config: TrainConfig, views: List[TrainingView],
                 loss_service: LossService, optimizer: OptimizerService):
        self.run_id = run_id
        self.config = config
        self.views = views
        self.loss_service = loss_service
        self.optimizer = optimizer
        self.rng = np.random.default_rng(config.seed)

    def sample_views(self) -> List[int]:
        count = len(self.views)
        per_iteration = self.config.views_per_iteration
        if per_iteration == 0 or per_iteration >= count:
            return list(range(count))
        return sorted(int(i) for i in self.rng.choice(count, size=per_iteration, replace=False))


class TrainingContext:
    """Context manager for run-specific data"""

    def __init__(self, run: TrainingRun):
        self.run = run

    def __enter__(self):
        self.run_token = _current_run.set(self.run)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        _current_run.reset(self.run_token)


def get_current_run() -> TrainingRun:
    """Get the active training run from context"""
    run = _current_run.get()
    if run is None:
        raise RuntimeError("No training run is active in this context")
    return run
