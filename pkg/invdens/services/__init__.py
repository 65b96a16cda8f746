# Services package initialization

from .adaptive_service import AdaptiveService
from .diffusion_service import DiffusionService
from .estimator_service import EstimatorService
from .experiment_service import ExperimentService
from .hyperparam_service import HyperparamService
from .kernel_service import KernelService
from .preaverage_service import PreaverageService

__all__ = [
    "AdaptiveService",
    "DiffusionService",
    "EstimatorService",
    "ExperimentService",
    "HyperparamService",
    "KernelService",
    "PreaverageService",
]
