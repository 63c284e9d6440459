"""Encoder/decoder depth-completion network built from region-adaptive convs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import ops
from ..tensor import check_tensor, concat_channels, split_channels, upsample_nearest, upsample_nearest_backward
from .common import LayerDesc, LayerSpec, ModelWeights

KIND = "completion"


@dataclass(frozen=True)
class CompletionConfig:
    encoder_kernels: tuple[int, ...] = (7, 5, 3, 3, 3)
    encoder_channels: tuple[int, ...] = (16, 32, 64, 128, 128)
    decoder_channels: tuple[int, ...] = (128, 64, 64, 16)
    use_rgb: bool = False

    def __post_init__(self):
        n = len(self.encoder_kernels)
        if n < 1 or len(self.encoder_channels) != n or len(self.decoder_channels) != n - 1:
            raise ValueError("need n encoder kernels/channels and n-1 decoder channels")

    @property
    def levels(self) -> int:
        return len(self.encoder_kernels)

    @property
    def input_channels(self) -> int:
        return 4 if self.use_rgb else 1

    @property
    def divisor(self) -> int:
        return 2**self.levels


def build_spec(cfg: CompletionConfig = CompletionConfig()) -> LayerSpec:
    layers = [LayerDesc("input", "input", out_channels=cfg.input_channels)]
    prev = cfg.input_channels
    for i, (k, c) in enumerate(zip(cfg.encoder_kernels, cfg.encoder_channels), start=1):
        layers.append(LayerDesc(f"aconv{i}", "region_conv", k, 2, prev, c, batch_norm=True))
        prev = c
    n = cfg.levels
    for j, c in enumerate(cfg.decoder_channels):
        level = n - 1 - j
        idx = n + 1 + j
        layers.append(LayerDesc(f"up{idx}", "upsample", up_factor=2))
        layers.append(LayerDesc(f"cat{idx}", "concat", skip=f"aconv{level}"))
        skip_ch = cfg.encoder_channels[level - 1]
        layers.append(LayerDesc(f"aconv{idx}", "region_conv", 3, 1, prev + skip_ch, c))
        prev = c
    last = 2 * n
    layers.append(LayerDesc(f"up{last}", "upsample", up_factor=2))
    layers.append(LayerDesc(f"cat{last}", "concat", skip="input"))
    layers.append(LayerDesc(f"aconv{last}", "region_conv", 3, 1, prev + cfg.input_channels, 1))
    spec = LayerSpec(KIND, tuple(layers))
    spec.validate()
    return spec


def encoder_maps(m, cfg: CompletionConfig = CompletionConfig()) -> list[np.ndarray]:
    """Filter maps at every encoder scale, finest (the input map) first."""
    maps = [ops.as_filter_map(m)]
    for k in cfg.encoder_kernels:
        maps.append(ops.update_filter_map(maps[-1], k, 2))
    return maps


class CompletionNet:
    """Forward and backward passes of the completion network.

    The decoder gates each adaptive conv with the union of the up-sampled
    decoder map and the encoder map at that scale, so the encoder maps reach
    the decoder while filled-in coarse features are not discarded.
    """

    def __init__(self, cfg: CompletionConfig = CompletionConfig()):
        self.cfg = cfg
        self.spec = build_spec(cfg)

    def check_input(self, x: np.ndarray) -> None:
        d = self.cfg.divisor
        if x.shape[1] != self.cfg.input_channels:
            raise ValueError(f"expected {self.cfg.input_channels} input channels, got {x.shape[1]}")
        if x.shape[2] % d or x.shape[3] % d:
            raise ValueError(f"input spatial dims {x.shape[2:]} must be divisible by {d}")

    def forward(self, weights: ModelWeights, x, m, training: bool = False):
        """Return ``(raw_output, output_map, cache)``.

        ``raw_output`` is not clamped; callers clamp to ``[0, 1]`` for
        inference and train on the raw value.
        """
        x = check_tensor(x, allow_empty=False)
        self.check_input(x)
        m = ops.as_filter_map(m, x.shape[0])
        if m.shape[1:] != x.shape[2:]:
            raise ValueError(f"map shape {m.shape[1:]} does not match input {x.shape[2:]}")
        cfg, n = self.cfg, self.cfg.levels
        cache: dict = {"enc": [], "dec": []}

        feats, maps = [x], [m]
        h = x
        for i, k in enumerate(cfg.encoder_kernels, start=1):
            name = f"aconv{i}"
            y, c_conv = ops.region_adaptive_conv_forward(h, maps[-1], weights.conv(name, 2))
            y, c_bn = ops.batch_norm_forward(y, weights.batch_norm(name), training)
            h, c_act = ops.leaky_relu_forward(y)
            cache["enc"].append((c_conv, c_bn, c_act))
            maps.append(ops.update_filter_map(maps[-1], k, 2))
            feats.append(h)

        dmap = maps[-1]
        for j in range(n):
            level = n - 1 - j
            idx = n + 1 + j
            up = upsample_nearest(h, 2)
            up_ch = up.shape[1]
            cat = concat_channels(up, feats[level])
            gate = np.maximum(upsample_map(dmap, 2), maps[level])
            y, c_conv = ops.region_adaptive_conv_forward(cat, gate, weights.conv(f"aconv{idx}"))
            dmap = ops.update_filter_map(gate, 3, 1)
            if j < n - 1:
                h, c_act = ops.leaky_relu_forward(y)
            else:
                h, c_act = y, None
            cache["dec"].append((up_ch, c_conv, c_act))
        return h, dmap, cache

    def predict(self, weights: ModelWeights, x, m) -> tuple[np.ndarray, np.ndarray]:
        out, out_map, _ = self.forward(weights, x, m, training=False)
        return np.clip(out, 0.0, 1.0), out_map

    def backward(self, weights: ModelWeights, grad_out: np.ndarray, cache: dict) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Return ``(parameter_gradients, input_gradient)``."""
        n = self.cfg.levels
        grads: dict[str, np.ndarray] = {}
        skip_grads: list[np.ndarray | None] = [None] * (n + 1)
        g = grad_out
        for j in reversed(range(n)):
            level = n - 1 - j
            idx = n + 1 + j
            up_ch, c_conv, c_act = cache["dec"][j]
            if c_act is not None:
                g = ops.leaky_relu_backward(g, c_act)
            g_cat, gw, gb = ops.region_adaptive_conv_backward(g, c_conv)
            grads[f"aconv{idx}.weight"], grads[f"aconv{idx}.bias"] = gw, gb
            g_up, g_skip = split_channels(g_cat, up_ch)
            skip_grads[level] = g_skip
            g = upsample_nearest_backward(g_up, 2)

        for i in reversed(range(1, n + 1)):
            name = f"aconv{i}"
            if skip_grads[i] is not None:
                g = g + skip_grads[i]
            c_conv, c_bn, c_act = cache["enc"][i - 1]
            g = ops.leaky_relu_backward(g, c_act)
            g, grads[f"{name}.bn.gamma"], grads[f"{name}.bn.beta"] = ops.batch_norm_backward(g, c_bn)
            g, grads[f"{name}.weight"], grads[f"{name}.bias"] = ops.region_adaptive_conv_backward(g, c_conv)
        g = g + skip_grads[0]
        return grads, g


def upsample_map(m: np.ndarray, factor: int) -> np.ndarray:
    return m.repeat(factor, axis=-2).repeat(factor, axis=-1)
