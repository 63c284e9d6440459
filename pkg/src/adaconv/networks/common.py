"""Layer descriptions and named weight storage shared by the networks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ops import BatchNormState, ConvParams


@dataclass(frozen=True)
class LayerDesc:
    name: str
    op: str  # "region_conv", "depth_conv", "conv", "upsample", "concat", "shuffle"
    kernel: int = 0
    stride: int = 1
    in_channels: int = 0
    out_channels: int = 0
    up_factor: int = 1
    skip: str | None = None
    batch_norm: bool = False

    @property
    def has_params(self) -> bool:
        return self.op in ("region_conv", "depth_conv", "conv")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    layers: tuple[LayerDesc, ...]
    chained: bool = True  # False when layer inputs are dense concatenations

    def __iter__(self):
        return iter(self.layers)

    def __getitem__(self, name: str) -> LayerDesc:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def param_layers(self) -> list[LayerDesc]:
        return [layer for layer in self.layers if layer.has_params]

    def validate(self) -> None:
        """Check that channel counts chain through every layer."""
        if not self.chained:
            return
        channels: dict[str, int] = {}
        current = None
        for layer in self.layers:
            if layer.op == "input":
                current = layer.out_channels
            elif layer.op == "upsample":
                pass
            elif layer.op == "concat":
                if layer.skip not in channels:
                    raise ValueError(f"{layer.name}: unknown skip source {layer.skip!r}")
                current = current + channels[layer.skip]
                if layer.out_channels and layer.out_channels != current:
                    raise ValueError(f"{layer.name}: expected {layer.out_channels} channels, chain gives {current}")
            elif layer.op == "shuffle":
                if current % (layer.up_factor**2):
                    raise ValueError(f"{layer.name}: {current} channels not divisible by r^2")
                current //= layer.up_factor**2
            elif layer.has_params:
                if current is not None and layer.in_channels != current:
                    raise ValueError(f"{layer.name}: expects {layer.in_channels} input channels, chain gives {current}")
                current = layer.out_channels
            channels[layer.name] = current


@dataclass
class ModelWeights:
    """Named tensors of one network.

    Trainable entries are ``<layer>.weight``, ``<layer>.bias``,
    ``<layer>.bn.gamma`` and ``<layer>.bn.beta``; running batch-norm
    statistics live under ``<layer>.bn.running_mean`` / ``.running_var`` and
    are not trained.
    """

    kind: str
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    TRAINABLE_SUFFIXES = (".weight", ".bias", ".bn.gamma", ".bn.beta")

    def conv(self, layer: str, stride: int = 1) -> ConvParams:
        return ConvParams(self.tensors[f"{layer}.weight"], self.tensors[f"{layer}.bias"], stride)

    def batch_norm(self, layer: str) -> BatchNormState:
        t = self.tensors
        return BatchNormState(
            gamma=t[f"{layer}.bn.gamma"],
            beta=t[f"{layer}.bn.beta"],
            running_mean=t[f"{layer}.bn.running_mean"],
            running_var=t[f"{layer}.bn.running_var"],
        )

    def trainable(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if k.endswith(self.TRAINABLE_SUFFIXES)}

    def astype(self, dtype) -> ModelWeights:
        return ModelWeights(self.kind, {k: v.astype(dtype) for k, v in self.tensors.items()})

    def copy(self) -> ModelWeights:
        return ModelWeights(self.kind, {k: v.copy() for k, v in self.tensors.items()})

    def check_against(self, spec: LayerSpec) -> None:
        if spec.kind != self.kind:
            raise ValueError(f"weights are for a {self.kind!r} network, spec describes {spec.kind!r}")
        for layer in spec.param_layers():
            w = self.tensors.get(f"{layer.name}.weight")
            expected = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
            if w is None or w.shape != expected:
                got = None if w is None else w.shape
                raise ValueError(f"{layer.name}.weight: expected shape {expected}, got {got}")
            b = self.tensors.get(f"{layer.name}.bias")
            if b is None or b.shape != (layer.out_channels,):
                raise ValueError(f"{layer.name}.bias missing or misshapen")
            if layer.batch_norm and f"{layer.name}.bn.gamma" not in self.tensors:
                raise ValueError(f"{layer.name}: batch-norm parameters missing")


def init_weights(spec: LayerSpec, rng: np.random.Generator, dtype=np.float32) -> ModelWeights:
    """He-normal weights (std ``sqrt(2 / fan_in)``), zero biases; batch-norm
    layers start as the identity."""
    spec.validate()
    tensors: dict[str, np.ndarray] = {}
    for layer in spec.param_layers():
        fan_in = layer.in_channels * layer.kernel * layer.kernel
        shape = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
        std = np.sqrt(2.0 / fan_in)
        tensors[f"{layer.name}.weight"] = (rng.standard_normal(shape) * std).astype(dtype)
        tensors[f"{layer.name}.bias"] = np.zeros(layer.out_channels, dtype)
        if layer.batch_norm:
            bn = BatchNormState.create(layer.out_channels, dtype)
            tensors[f"{layer.name}.bn.gamma"] = bn.gamma
            tensors[f"{layer.name}.bn.beta"] = bn.beta
            tensors[f"{layer.name}.bn.running_mean"] = bn.running_mean
            tensors[f"{layer.name}.bn.running_var"] = bn.running_var
    return ModelWeights(spec.kind, tensors)
