"""Dense-block super-resolution network with depth-adaptive convolutions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import ops
from ..tensor import check_tensor, concat_channels, split_channels
from .common import LayerDesc, LayerSpec, ModelWeights

KIND = "superres"


@dataclass(frozen=True)
class SRConfig:
    ratio: int = 4
    features: int = 64
    blocks: int = 5
    use_rgb: bool = False
    gate: ops.DepthGateConfig = ops.DepthGateConfig()

    def __post_init__(self):
        if self.ratio not in (2, 4):
            raise ValueError(f"up-sampling ratio must be 2 or 4, got {self.ratio}")
        if (2 * self.features) % (self.ratio**2):
            raise ValueError("2 * features must be divisible by ratio^2")

    @property
    def input_channels(self) -> int:
        return 4 if self.use_rgb else 1


def build_spec(cfg: SRConfig = SRConfig()) -> LayerSpec:
    f = cfg.features
    layers = [
        LayerDesc("input", "input", out_channels=cfg.input_channels),
        LayerDesc("aconv0", "depth_conv", 3, 1, cfg.input_channels, f),
    ]
    for b in range(1, cfg.blocks + 1):
        layers.append(LayerDesc(f"block{b}.conv1", "depth_conv", 3, 1, f * b, f))
        layers.append(LayerDesc(f"block{b}.conv2", "depth_conv", 3, 1, f, f))
    layers += [
        LayerDesc("aconv6", "depth_conv", 3, 1, f * (cfg.blocks + 1), f),
        LayerDesc("cat0", "concat", skip="aconv0", out_channels=2 * f),
        LayerDesc("aconv7", "depth_conv", 3, 1, 2 * f, 2 * f),
        LayerDesc("shuffle", "shuffle", up_factor=cfg.ratio),
        LayerDesc("conv_out", "conv", 1, 1, 2 * f // cfg.ratio**2, 1),
    ]
    return LayerSpec(KIND, tuple(layers), chained=False)


class SuperResolutionNet:
    """All convs before the shuffle run at low resolution, gated by the input
    depth; every one of them is 3x3 so the gates are computed once."""

    def __init__(self, cfg: SRConfig = SRConfig()):
        self.cfg = cfg
        self.spec = build_spec(cfg)

    def _inputs(self, depth, rgb):
        depth = check_tensor(depth, "depth", allow_empty=False)
        if depth.shape[1] != 1:
            raise ValueError(f"depth must have one channel, got {depth.shape[1]}")
        if not self.cfg.use_rgb:
            return depth, depth
        if rgb is None:
            raise ValueError("this network was configured with RGB input")
        rgb = check_tensor(rgb, "rgb")
        if rgb.shape[1] != 3 or rgb.shape[0] != depth.shape[0] or rgb.shape[2:] != depth.shape[2:]:
            raise ValueError(f"rgb shape {rgb.shape} does not match depth {depth.shape}")
        return depth, concat_channels(depth, (rgb / 255.0).astype(depth.dtype))

    def forward(self, weights: ModelWeights, depth, rgb=None):
        """Return ``(high_res_depth, cache)``; output lies in ``[0, 1]``."""
        guide, x = self._inputs(depth, rgb)
        cfg = self.cfg
        gates = ops.depth_gates(guide, 3, cfg.gate)

        def dconv(name, inp):
            return ops.depth_adaptive_conv_forward(inp, None, weights.conv(name), gates=gates)

        cache: dict = {"blocks": []}
        y, cache["aconv0"] = dconv("aconv0", x)
        a0, cache["act0"] = ops.leaky_relu_forward(y)
        feats = [a0]
        for b in range(1, cfg.blocks + 1):
            inp = np.concatenate(feats, axis=1) if len(feats) > 1 else feats[0]
            y, c1 = dconv(f"block{b}.conv1", inp)
            y, ca = ops.leaky_relu_forward(y)
            y, c2 = dconv(f"block{b}.conv2", y)
            cache["blocks"].append((c1, ca, c2))
            feats.append(y)
        y, cache["aconv6"] = dconv("aconv6", np.concatenate(feats, axis=1))
        a6, cache["act6"] = ops.leaky_relu_forward(y)
        y, cache["aconv7"] = dconv("aconv7", concat_channels(a6, a0))
        a7, cache["act7"] = ops.leaky_relu_forward(y)
        s = ops.pixel_shuffle(a7, cfg.ratio)
        y, cache["conv_out"] = ops.conv_forward(s, weights.conv("conv_out"))
        t, cache["tanh"] = ops.tanh_forward(y)
        return (t + 1.0) * 0.5, cache

    def predict(self, weights: ModelWeights, depth, rgb=None) -> np.ndarray:
        return self.forward(weights, depth, rgb)[0]

    @property
    def halo(self) -> int:
        """Receptive-field radius at low resolution: one pixel per 3x3 conv."""
        return 2 * self.cfg.blocks + 3

    def predict_tiled(self, weights: ModelWeights, depth, rgb=None, tile: int = 64) -> np.ndarray:
        """``predict`` over overlapping tiles to bound memory on large frames.

        Each tile is extended by ``halo`` pixels so its centre sees the same
        neighbourhood as in a whole-frame pass.
        """
        depth = check_tensor(depth, "depth", allow_empty=False)
        n, _, h, w = depth.shape
        if h <= tile and w <= tile:
            return self.predict(weights, depth, rgb)
        r, pad = self.cfg.ratio, self.halo
        out = np.empty((n, 1, h * r, w * r), dtype=depth.dtype)
        for y0 in range(0, h, tile):
            for x0 in range(0, w, tile):
                y1, x1 = min(y0 + tile, h), min(x0 + tile, w)
                ya, xa = max(y0 - pad, 0), max(x0 - pad, 0)
                yb, xb = min(y1 + pad, h), min(x1 + pad, w)
                sub_rgb = None if rgb is None else rgb[:, :, ya:yb, xa:xb]
                hr = self.predict(weights, depth[:, :, ya:yb, xa:xb], sub_rgb)
                oy, ox = (y0 - ya) * r, (x0 - xa) * r
                out[:, :, y0 * r : y1 * r, x0 * r : x1 * r] = hr[:, :, oy : oy + (y1 - y0) * r, ox : ox + (x1 - x0) * r]
        return out

    def backward(self, weights: ModelWeights, grad_out: np.ndarray, cache: dict) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Return ``(parameter_gradients, gradient_wrt_network_input)``."""
        cfg, f = self.cfg, self.cfg.features
        grads: dict[str, np.ndarray] = {}

        def dconv_bwd(name, g, c):
            gx, grads[f"{name}.weight"], grads[f"{name}.bias"] = ops.depth_adaptive_conv_backward(g, c)
            return gx

        g = ops.tanh_backward(grad_out * 0.5, cache["tanh"])
        g, grads["conv_out.weight"], grads["conv_out.bias"] = ops.conv_backward(g, cache["conv_out"])
        g = ops.pixel_shuffle_backward(g, cfg.ratio)
        g = ops.leaky_relu_backward(g, cache["act7"])
        g = dconv_bwd("aconv7", g, cache["aconv7"])
        g_a6, g_a0 = split_channels(g, f)
        g = ops.leaky_relu_backward(g_a6, cache["act6"])
        g_all = dconv_bwd("aconv6", g, cache["aconv6"])

        # g_all holds gradients for [a0, b1, ..., bB]; walk blocks backwards,
        # spreading each block's input gradient over the features it read
        feat_grads = [np.ascontiguousarray(g_all[:, i * f : (i + 1) * f]) for i in range(cfg.blocks + 1)]
        feat_grads[0] = feat_grads[0] + g_a0
        for b in reversed(range(1, cfg.blocks + 1)):
            c1, ca, c2 = cache["blocks"][b - 1]
            g = dconv_bwd(f"block{b}.conv2", feat_grads[b], c2)
            g = ops.leaky_relu_backward(g, ca)
            g_in = dconv_bwd(f"block{b}.conv1", g, c1)
            for i in range(b):
                feat_grads[i] = feat_grads[i] + g_in[:, i * f : (i + 1) * f]
        g = ops.leaky_relu_backward(feat_grads[0], cache["act0"])
        g_x = dconv_bwd("aconv0", g, cache["aconv0"])
        return grads, g_x
