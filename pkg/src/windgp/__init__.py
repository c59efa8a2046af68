"""Warped separable spatiotemporal Gaussian processes for wind power forecast errors."""

from .errors import WindGPError
from .kernels import KernelFamily, KernelSpec
from .params import ModelConfig, ParameterVector
from .training import FittedModel, OptimizerConfig, fit, load_model, save_model

__all__ = [
    "FittedModel",
    "KernelFamily",
    "KernelSpec",
    "ModelConfig",
    "OptimizerConfig",
    "ParameterVector",
    "WindGPError",
    "fit",
    "load_model",
    "save_model",
]
__version__ = "0.1.0"
