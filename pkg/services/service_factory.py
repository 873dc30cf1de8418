"""
Service Factory for managing singleton service instances
"""
from typing import Any, Dict

from models.config import TrainConfig
from services.evaluation_service import EvaluationService
from services.gradcheck_service import GradcheckService
from services.gradient_service import GradientService
from services.loss_service import LossService
from services.optimizer_service import OptimizerService
from services.render_service import RenderService
from services.scene_io_service import SceneIOService
from utils.logging_config import get_logger

logger = get_logger('services.factory')


class ServiceFactory:
    """
    Factory class to manage singleton service instances.

    Stateless services are shared; loss and optimizer services depend on a
    training config and are built fresh for every run.
    """

    _instances: Dict[str, Any] = {}

    @classmethod
    def get_render_service(cls) -> RenderService:
        """Get singleton render service instance with environment defaults"""
        if 'render' not in cls._instances:
            cls._instances['render'] = RenderService()
            logger.info("Created singleton RenderService instance")
        return cls._instances['render']

    @classmethod
    def get_gradient_service(cls) -> GradientService:
        """Get singleton gradient service instance with environment defaults"""
        if 'gradient' not in cls._instances:
            cls._instances['gradient'] = GradientService()
            logger.info("Created singleton GradientService instance")
        return cls._instances['gradient']

    @classmethod
    def get_scene_io_service(cls) -> SceneIOService:
        """Get singleton scene I/O service instance"""
        if 'scene_io' not in cls._instances:
            cls._instances['scene_io'] = SceneIOService()
            logger.info("Created singleton SceneIOService instance")
        return cls._instances['scene_io']

    @classmethod
    def get_evaluation_service(cls) -> EvaluationService:
        """Get singleton evaluation service instance"""
        if 'evaluation' not in cls._instances:
            cls._instances['evaluation'] = EvaluationService()
            logger.info("Created singleton EvaluationService instance")
        return cls._instances['evaluation']

    @classmethod
    def get_gradcheck_service(cls) -> GradcheckService:
        """Get singleton gradcheck service instance"""
        if 'gradcheck' not in cls._instances:
            cls._instances['gradcheck'] = GradcheckService()
            logger.info("Created singleton GradcheckService instance")
        return cls._instances['gradcheck']

    @classmethod
    def create_loss_service(cls, config: TrainConfig) -> LossService:
        return LossService(config.weights, patch_size=config.ncc_patch_size)

    @classmethod
    def create_optimizer_service(cls, config: TrainConfig) -> OptimizerService:
        return OptimizerService(config)

    @classmethod
    def reset(cls):
        """Drop every cached instance so the next lookup rereads the environment"""
        cls._instances.clear()
        logger.debug("Cleared service singletons")
