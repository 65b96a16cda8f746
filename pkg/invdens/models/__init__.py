"""Immutable numeric carriers shared by the services."""

from invdens.models.diffusion import DiffusionModel, ObservationScheme, ObservationSeries, OUTransition
from invdens.models.estimate import DebiasWeights, DensityEstimate, EstimatorKind
from invdens.models.kernel import ConvolvedKernel1D, Kernel1D, ProductKernel
from invdens.models.sample import PreaveragedSample

__all__ = [
    "DiffusionModel",
    "ObservationScheme",
    "ObservationSeries",
    "OUTransition",
    "DebiasWeights",
    "DensityEstimate",
    "EstimatorKind",
    "ConvolvedKernel1D",
    "Kernel1D",
    "ProductKernel",
    "PreaveragedSample",
]
