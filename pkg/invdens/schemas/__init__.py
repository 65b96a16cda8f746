# Schemas package initialization

from .adaptive import BandwidthGrid, GLState
from .experiment import ExperimentConfig, ExperimentResult, load_config, parse_overrides, validate_config
from .hyperparams import DClass, HolderClass, HyperparamPlan, RegimeInfo, RegimeName

__all__ = [
    "BandwidthGrid",
    "GLState",
    "ExperimentConfig",
    "ExperimentResult",
    "load_config",
    "parse_overrides",
    "validate_config",
    "DClass",
    "HolderClass",
    "HyperparamPlan",
    "RegimeInfo",
    "RegimeName",
]
