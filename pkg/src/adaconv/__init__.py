"""Adaptive-convolution RGB-D completion, refinement and super-resolution."""

from .estimators import BilateralRefiner, DepthCompleter, DepthSuperResolver, PipelineResult, RgbdPipeline

__all__ = ["BilateralRefiner", "DepthCompleter", "DepthSuperResolver", "PipelineResult", "RgbdPipeline"]
__version__ = "0.1.0"
