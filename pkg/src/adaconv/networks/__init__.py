from .common import LayerDesc, LayerSpec, ModelWeights, init_weights
from .completion import CompletionConfig, CompletionNet, encoder_maps
from .refine import BilateralConfig, refine
from .superres import SRConfig, SuperResolutionNet

__all__ = [
    "BilateralConfig",
    "CompletionConfig",
    "CompletionNet",
    "LayerDesc",
    "LayerSpec",
    "ModelWeights",
    "SRConfig",
    "SuperResolutionNet",
    "encoder_maps",
    "init_weights",
    "refine",
]
